use std::collections::{BTreeMap, BTreeSet};

use super::ids::{ActionId, DocId, ParticipantId};

/// A logged application operation.
///
/// The engine only looks at `id`, `keys` and `attributes`; the payload is
/// carried and persisted but never interpreted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub id: ActionId,
    /// Opaque conflict-suspicion keys, compared for equality only.
    pub keys: BTreeSet<u64>,
    pub app_tag: String,
    pub payload: Vec<u8>,
    /// Application-visible metadata, usable by filters.
    pub attributes: BTreeMap<String, String>,
}

impl Action {
    pub fn new(id: ActionId, app_tag: impl Into<String>) -> Self {
        Action {
            id,
            keys: BTreeSet::new(),
            app_tag: app_tag.into(),
            payload: Vec::new(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_keys(mut self, keys: impl IntoIterator<Item = u64>) -> Self {
        self.keys.extend(keys);
        self
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(name.into(), value.into());
        self
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn doc(&self) -> &DocId {
        &self.id.doc
    }

    pub fn issuer(&self) -> &ParticipantId {
        &self.id.issuer
    }

    /// True when the two key sets share at least one value ("or" semantics).
    /// Keyless actions never overlap with anything.
    pub fn shares_key_with(&self, other: &Action) -> bool {
        let (small, large) = if self.keys.len() <= other.keys.len() {
            (&self.keys, &other.keys)
        } else {
            (&other.keys, &self.keys)
        };
        small.iter().any(|k| large.contains(k))
    }

    /// Looks up an attribute, including the engine pseudo-attributes
    /// `@doc`, `@issuer`, `@timestamp` and `@app`.
    pub fn attribute(&self, name: &str) -> Option<std::borrow::Cow<'_, str>> {
        use std::borrow::Cow;
        match name {
            "@doc" => Some(Cow::Borrowed(self.id.doc.as_str())),
            "@issuer" => Some(Cow::Borrowed(self.id.issuer.as_str())),
            "@timestamp" => Some(Cow::Owned(self.id.timestamp.to_string())),
            "@app" => Some(Cow::Borrowed(self.app_tag.as_str())),
            _ => self.attributes.get(name).map(|v| Cow::Borrowed(v.as_str())),
        }
    }
}

/// 64-bit FNV-1a, the hash used to derive action keys from identifiers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Key for a single identifier.
pub fn key_of(ident: &str) -> u64 {
    fnv1a64(ident.as_bytes())
}

/// Key with "and" semantics: collides only when *all* the identifiers match.
/// Hashes the XOR of the identifier hashes.
pub fn key_of_all<'a>(idents: impl IntoIterator<Item = &'a str>) -> u64 {
    let folded = idents.into_iter().fold(0u64, |acc, s| acc ^ key_of(s));
    fnv1a64(&folded.to_le_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn keyless_actions_never_overlap() {
        let a = Action::new(ActionId::new("d", "p", 1), "t");
        let b = Action::new(ActionId::new("d", "q", 1), "t").with_keys([1, 2]);
        assert!(!a.shares_key_with(&b));
        assert!(!a.shares_key_with(&a));
        let c = Action::new(ActionId::new("d", "r", 1), "t").with_keys([2, 9]);
        assert!(b.shares_key_with(&c));
    }

    #[test]
    fn and_keys_are_order_insensitive() {
        assert_eq!(key_of_all(["x", "y"]), key_of_all(["y", "x"]));
        assert_ne!(key_of_all(["x", "y"]), key_of_all(["x", "z"]));
    }
}
