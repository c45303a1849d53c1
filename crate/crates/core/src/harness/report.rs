use std::fmt;

/// Line-oriented `key=value` output. Fields marked as timings are the only
/// ones allowed to differ between runs with the same seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub name: String,
    fields: Vec<(String, String, bool)>,
}

impl Report {
    pub fn new(name: impl Into<String>) -> Self {
        Report {
            name: name.into(),
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.fields.push((key.to_owned(), value.to_string(), false));
        self
    }

    /// Wall-clock measurement, in milliseconds.
    pub fn timing(&mut self, key: &str, ms: f64) -> &mut Self {
        self.fields.push((key.to_owned(), format!("{ms:.3}"), true));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    /// The report without timing fields.
    pub fn deterministic(&self) -> String {
        let mut out = format!("report={}\n", self.name);
        for (k, v, timing) in &self.fields {
            if !timing {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "report={}", self.name)?;
        for (k, v, _) in &self.fields {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
