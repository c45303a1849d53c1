//! Scenario scripts.
//!
//! A script is plain text. Blank lines and `#` comments are ignored. Other
//! lines are one of:
//!
//! ```text
//! key = value             # setting, e.g. `sites = alice, bob`
//! @<tick> <word>...       # event at a tick, e.g. `@500 disconnect bob`
//! expect <word>...        # assertion checked after the run
//! ```
//!
//! The simulator only parses; the harness gives meaning to settings, events
//! and expectations.

use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Script {
    pub settings: BTreeMap<String, String>,
    /// Events sorted by tick; lines with equal ticks keep file order.
    pub events: Vec<ScriptEvent>,
    pub expects: Vec<Expect>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptEvent {
    pub tick: u64,
    pub words: Vec<String>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expect {
    pub words: Vec<String>,
    pub line: usize,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ParseError> {
        let mut script = Script::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| ParseError { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words = || content.split_whitespace().map(str::to_owned);
            if let Some(rest) = content.strip_prefix('@') {
                let mut it = rest.split_whitespace();
                let tick = it
                    .next()
                    .and_then(|t| t.parse::<u64>().ok())
                    .ok_or_else(|| err(format!("bad tick in {content:?}")))?;
                let words: Vec<String> = it.map(str::to_owned).collect();
                if words.is_empty() {
                    return Err(err("event without a command".into()));
                }
                script.events.push(ScriptEvent { tick, words, line });
            } else if content.split_whitespace().next() == Some("expect") {
                let words: Vec<String> = words().skip(1).collect();
                if words.is_empty() {
                    return Err(err("empty expectation".into()));
                }
                script.expects.push(Expect { words, line });
            } else if let Some((k, v)) = content.split_once('=') {
                let key = k.trim();
                if key.is_empty() || key.contains(char::is_whitespace) {
                    return Err(err(format!("bad setting name {key:?}")));
                }
                if script.settings.insert(key.to_owned(), v.trim().to_owned()).is_some() {
                    return Err(err(format!("duplicate setting {key:?}")));
                }
            } else {
                return Err(err(format!("unrecognised line {content:?}")));
            }
        }
        script.events.sort_by_key(|e| e.tick);
        Ok(script)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str)
    }

    /// A setting parsed as `T`, or `default` when absent.
    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ParseError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ParseError {
                line: 0,
                message: format!("setting {key} = {v:?} is not valid"),
            }),
        }
    }

    /// A comma-separated list setting.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// A `lo..hi` range setting.
    pub fn range(&self, key: &str, default: (u64, u64)) -> Result<(u64, u64), ParseError> {
        let Some(v) = self.get(key) else { return Ok(default) };
        let bad = || ParseError {
            line: 0,
            message: format!("setting {key} = {v:?} is not a lo..hi range"),
        };
        let (lo, hi) = v.split_once("..").ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_line_kinds() {
        let s = Script::parse(
            "# demo\nsites = a, b\nlatency = 1..50\n\n@20 reconnect b\n@10 disconnect b # why not\nexpect converged\n",
        )
        .unwrap();
        assert_eq!(s.list("sites"), vec!["a", "b"]);
        assert_eq!(s.range("latency", (0, 0)).unwrap(), (1, 50));
        assert_eq!(s.events[0].words, vec!["disconnect", "b"]);
        assert_eq!(s.events[1].tick, 20);
        assert_eq!(s.expects[0].words, vec!["converged"]);
        assert_eq!(s.get_or("ticks", 7u64).unwrap(), 7);
    }

    #[test]
    fn reports_line_numbers() {
        let e = Script::parse("a = 1\n@x boom\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(Script::parse("a = 1\na = 2").unwrap_err().line, 2);
        assert_eq!(Script::parse("nonsense").unwrap_err().line, 1);
    }
}
