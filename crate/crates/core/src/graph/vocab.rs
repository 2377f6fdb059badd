use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Token ↔ dense id mapping. Ids are assigned in first-seen order.
///
/// A frozen vocabulary rejects unseen tokens instead of growing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    frozen: bool,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for t in tokens {
            let t = t.into();
            if v.index.contains_key(&t) {
                return Err(Error::Contract(format!("duplicate vocabulary token `{t}`")));
            }
            v.intern(&t);
        }
        Ok(v)
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    /// Looks up `token`, adding it unless the vocabulary is frozen.
    pub fn resolve(&mut self, token: &str, kind: &'static str) -> Result<usize> {
        match self.index.get(token) {
            Some(&id) => Ok(id),
            None if self.frozen => Err(Error::Vocabulary {
                kind,
                token: token.to_owned(),
            }),
            None => Ok(self.intern(token)),
        }
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Loads a saved vocabulary; the result is frozen.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_tokens(text.lines())?.freeze())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_seen_order() {
        let mut v = Vocab::new();
        assert_eq!(v.resolve("b", "entity").unwrap(), 0);
        assert_eq!(v.resolve("a", "entity").unwrap(), 1);
        assert_eq!(v.resolve("b", "entity").unwrap(), 0);
        assert_eq!(v.tokens(), &["b", "a"]);
    }

    #[test]
    fn frozen_rejects_unknown() {
        let mut v = Vocab::from_tokens(["x"]).unwrap().freeze();
        assert!(matches!(
            v.resolve("y", "relation"),
            Err(Error::Vocabulary { kind: "relation", .. })
        ));
    }

    #[test]
    fn save_load_keeps_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("entities.txt");
        let v = Vocab::from_tokens(["c", "a", "b"]).unwrap();
        v.save(&path).unwrap();
        let back = Vocab::load(&path).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        for t in ["a", "b", "c"] {
            assert_eq!(back.id(t), v.id(t));
        }
    }
}
