use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::kg::{KnowledgeGraph, Triplet};
use super::vocab::Vocab;
use crate::error::{Error, Result};

/// Reads `head<TAB>relation<TAB>tail` lines into dense-id triplets.
///
/// Blank lines and lines starting with `#` are skipped. Ids come from
/// `entities` and `relations`, which grow in first-seen order unless
/// frozen.
pub fn load_triplets(path: &Path, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Triplet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triplets(&text, path, entities, relations)
}

pub(crate) fn parse_triplets(
    text: &str,
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                found: fields.len(),
            });
        }
        let head = entities.resolve(fields[0], "entity")?;
        let relation = relations.resolve(fields[1], "relation")?;
        let tail = entities.resolve(fields[2], "entity")?;
        out.push(Triplet::new(head, relation, tail));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Transductive,
    Inductive,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(Self::Transductive),
            "inductive" => Ok(Self::Inductive),
            other => Err(Error::Config(format!(
                "dataset mode must be `transductive` or `inductive`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Transductive => "transductive",
            Self::Inductive => "inductive",
        })
    }
}

/// Test-time fact graph of an inductive split, with its own entity ids.
#[derive(Debug, Clone)]
pub struct InferenceFacts {
    pub facts: Vec<Triplet>,
    pub entities: Vocab,
}

/// Train/valid/test triplets sharing one relation vocabulary.
///
/// Transductive splits share one entity vocabulary. Inductive splits
/// keep the training entities for train/valid and index the test
/// queries against the entities of `inference.txt`.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub root: PathBuf,
    pub mode: SplitMode,
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triplet>,
    pub valid: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub inference: Option<InferenceFacts>,
}

impl DatasetSplit {
    /// Loads `train.txt`, `valid.txt`, `test.txt` (and `inference.txt`
    /// for inductive splits) from `dir`.
    pub fn load(dir: &Path, mode: SplitMode) -> Result<Self> {
        Self::load_with(dir, mode, None, None)
    }

    /// Like [`load`](Self::load) but with fixed vocabularies, e.g. the
    /// ones persisted next to a checkpoint.
    pub fn load_with(
        dir: &Path,
        mode: SplitMode,
        entities: Option<Vocab>,
        relations: Option<Vocab>,
    ) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let mut entities = entities.unwrap_or_default();
        let mut relations = relations.unwrap_or_default();
        let train = load_triplets(&dir.join("train.txt"), &mut entities, &mut relations)?;
        let valid = load_triplets(&dir.join("valid.txt"), &mut entities, &mut relations)?;
        let (test, inference) = match mode {
            SplitMode::Transductive => {
                let test = load_triplets(&dir.join("test.txt"), &mut entities, &mut relations)?;
                (test, None)
            }
            SplitMode::Inductive => {
                // Test-time relations must already be known from training.
                let was_frozen = relations.is_frozen();
                relations.set_frozen(true);
                let mut inf_entities = Vocab::new();
                let facts = load_triplets(&dir.join("inference.txt"), &mut inf_entities, &mut relations)?;
                let test = load_triplets(&dir.join("test.txt"), &mut inf_entities, &mut relations)?;
                relations.set_frozen(was_frozen);
                (
                    test,
                    Some(InferenceFacts {
                        facts,
                        entities: inf_entities,
                    }),
                )
            }
        };
        Ok(Self {
            root: dir.to_owned(),
            mode,
            entities,
            relations,
            train,
            valid,
            test,
            inference,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_base_relations(&self) -> usize {
        self.relations.len()
    }

    /// Message-passing graph for training and validation: the training
    /// facts with inverse edges.
    pub fn train_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::build(&self.train, self.num_entities(), self.num_base_relations(), true)
    }

    /// Message-passing graph for test queries: the training facts in the
    /// transductive setting, the inference facts in the inductive one.
    pub fn test_graph(&self) -> Result<KnowledgeGraph> {
        match &self.inference {
            None => self.train_graph(),
            Some(inf) => KnowledgeGraph::build(&inf.facts, inf.entities.len(), self.num_base_relations(), true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        let err = parse_triplets("a\tr\tb\n\na\tb\n", Path::new("x.txt"), &mut e, &mut r).unwrap_err();
        match err {
            Error::Parse { line, found, .. } => {
                assert_eq!(line, 3);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_empty_input() {
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        let ts = parse_triplets("# header\n\n", Path::new("x"), &mut e, &mut r).unwrap();
        assert!(ts.is_empty());
        assert!(e.is_empty() && r.is_empty());
    }

    #[test]
    fn fixed_vocab_rejects_unknown_tokens() {
        let mut e = Vocab::from_tokens(["a", "b"]).unwrap().freeze();
        let mut r = Vocab::from_tokens(["r"]).unwrap().freeze();
        let ok = parse_triplets("b\tr\ta\n", Path::new("x"), &mut e, &mut r).unwrap();
        assert_eq!(ok, vec![Triplet::new(1, 0, 0)]);
        let err = parse_triplets("a\tr\tc\n", Path::new("x"), &mut e, &mut r).unwrap_err();
        assert!(matches!(err, Error::Vocabulary { kind: "entity", .. }));
    }

    #[test]
    fn inductive_split_has_separate_entities() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "a\tr\tb\nb\ts\tc\n");
        write(dir.path(), "valid.txt", "a\ts\tc\n");
        write(dir.path(), "inference.txt", "x\tr\ty\n");
        write(dir.path(), "test.txt", "y\ts\tx\n");
        let ds = DatasetSplit::load(dir.path(), SplitMode::Inductive).unwrap();
        assert_eq!(ds.num_entities(), 3);
        let inf = ds.inference.as_ref().unwrap();
        assert_eq!(inf.entities.len(), 2);
        assert_eq!(ds.test, vec![Triplet::new(1, 1, 0)]);
        assert_eq!(ds.test_graph().unwrap().num_entities(), 2);
    }

    #[test]
    fn inductive_rejects_new_relations() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "a\tr\tb\n");
        write(dir.path(), "valid.txt", "");
        write(dir.path(), "inference.txt", "x\tq\ty\n");
        write(dir.path(), "test.txt", "");
        let err = DatasetSplit::load(dir.path(), SplitMode::Inductive).unwrap_err();
        assert!(matches!(err, Error::Vocabulary { kind: "relation", .. }));
    }

    #[test]
    fn missing_directory_names_path() {
        let err = DatasetSplit::load(Path::new("/nonexistent/kg"), SplitMode::Transductive).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/kg"));
    }
}
