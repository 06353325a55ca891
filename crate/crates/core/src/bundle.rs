//! Self-contained model files.
//!
//! Layout: the magic bytes `GRDM`, the format version (u32 LE), the header
//! length (u64 LE), a JSON header and then the data sections, raw
//! little-endian f64 arrays addressed by the header's section table.
//! The header holds the pipeline config, the feature schema and every
//! structural field of the model; the sections hold tree nodes, feature
//! importances and dictionary atoms, so all numbers reload bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MotionClass;
use crate::dictionary::{ClassDictionary, LassoConfig};
use crate::forest::{DecisionTree, ForestConfig, Node, RandomForest, Task};
use crate::pipeline::{HeightModel, MotionModel, PipelineConfig};

pub const MAGIC: [u8; 4] = *b"GRDM";
pub const FORMAT_VERSION: u32 = 1;

const PREAMBLE: usize = 4 + 4 + 8;
const SPLIT_TAG: f64 = 0.0;
const LEAF_TAG: f64 = 1.0;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a model bundle (bad magic bytes)")]
    BadMagic,
    #[error("bundle format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
}

fn corrupt(msg: impl Into<String>) -> BundleError {
    BundleError::Corrupt(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Height,
    Motion,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Height(HeightModel),
    Motion(MotionModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    /// Forest input columns, in order.
    pub feature_names: Vec<String>,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn height(model: HeightModel, config: PipelineConfig) -> Self {
        ModelBundle { config, feature_names: HeightModel::feature_names(), model: TrainedModel::Height(model) }
    }

    pub fn motion(model: MotionModel, config: PipelineConfig) -> Self {
        let feature_names = MotionModel::feature_names(model.raw_errors, config.hog_bins);
        ModelBundle { config, feature_names, model: TrainedModel::Motion(model) }
    }

    pub fn kind(&self) -> PipelineKind {
        match self.model {
            TrainedModel::Height(_) => PipelineKind::Height,
            TrainedModel::Motion(_) => PipelineKind::Motion,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections = Sections::default();
        let forest = match &self.model {
            TrainedModel::Height(m) => &m.forest,
            TrainedModel::Motion(m) => &m.forest,
        };
        let forest_header = ForestHeader::write(forest, &mut sections);
        let motion = match &self.model {
            TrainedModel::Height(_) => None,
            TrainedModel::Motion(m) => Some(MotionHeader {
                raw_errors: m.raw_errors,
                lasso: m.lasso,
                dictionaries: m
                    .dictionaries
                    .iter()
                    .map(|d| DictionaryHeader {
                        class: d.class,
                        dim: d.dim,
                        n_atoms: d.n_atoms,
                        lambda: d.lambda,
                        atoms: sections.push(format!("dict.{}", d.class), &d.atoms),
                    })
                    .collect(),
            }),
        };
        let header = Header {
            kind: self.kind(),
            config: self.config.clone(),
            feature_names: self.feature_names.clone(),
            forest: forest_header,
            motion,
            sections: sections.table,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + sections.data.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &sections.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(BundleError::BadMagic);
        }
        if bytes.len() < PREAMBLE {
            return Err(corrupt("truncated preamble"));
        }
        let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if found != FORMAT_VERSION {
            return Err(BundleError::VersionMismatch { found, expected: FORMAT_VERSION });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| PREAMBLE.checked_add(n))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("header runs past the end of the file"))?;
        let header: Header =
            serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(|e| corrupt(format!("header: {e}")))?;
        let body = &bytes[header_end..];
        if !body.len().is_multiple_of(8) {
            return Err(corrupt("data length is not a multiple of 8"));
        }
        let data: Vec<f64> =
            body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let read = |id: usize| -> Result<&[f64], BundleError> {
            let s = header.sections.get(id).ok_or_else(|| corrupt(format!("no section {id}")))?;
            data.get(s.offset..s.offset + s.len).ok_or_else(|| corrupt(format!("section {} out of bounds", s.name)))
        };

        let forest = header.forest.read(&read)?;
        let model = match (header.kind, header.motion) {
            (PipelineKind::Height, None) => TrainedModel::Height(HeightModel { forest }),
            (PipelineKind::Motion, Some(m)) => {
                let dictionaries = m
                    .dictionaries
                    .iter()
                    .map(|d| {
                        let atoms = read(d.atoms)?.to_vec();
                        let dict = ClassDictionary::new(d.class, d.dim, d.lambda, atoms)
                            .map_err(|e| corrupt(format!("dictionary {}: {e}", d.class)))?;
                        if dict.n_atoms != d.n_atoms {
                            return Err(corrupt(format!("dictionary {} atom count", d.class)));
                        }
                        Ok(dict)
                    })
                    .collect::<Result<_, BundleError>>()?;
                TrainedModel::Motion(MotionModel { dictionaries, forest, raw_errors: m.raw_errors, lasso: m.lasso })
            }
            _ => return Err(corrupt("model kind does not match its contents")),
        };
        let bundle = ModelBundle { config: header.config, feature_names: header.feature_names, model };
        let n_features = match &bundle.model {
            TrainedModel::Height(m) => m.forest.n_features,
            TrainedModel::Motion(m) => m.forest.n_features,
        };
        if bundle.feature_names.len() != n_features {
            return Err(corrupt("feature schema does not match the forest"));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        fs::write(path, self.to_bytes()).map_err(|source| BundleError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let bytes = fs::read(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SectionEntry {
    name: String,
    /// Position and length in f64 values from the start of the data.
    offset: usize,
    len: usize,
}

#[derive(Default)]
struct Sections {
    table: Vec<SectionEntry>,
    data: Vec<f64>,
}

impl Sections {
    fn push(&mut self, name: String, values: &[f64]) -> usize {
        self.table.push(SectionEntry { name, offset: self.data.len(), len: values.len() });
        self.data.extend_from_slice(values);
        self.table.len() - 1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: PipelineKind,
    config: PipelineConfig,
    feature_names: Vec<String>,
    forest: ForestHeader,
    motion: Option<MotionHeader>,
    sections: Vec<SectionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestHeader {
    task: Task,
    config: ForestConfig,
    n_features: usize,
    seed: u64,
    importances: usize,
    /// Section id of each tree's node array.
    trees: Vec<usize>,
}

impl ForestHeader {
    fn write(forest: &RandomForest, sections: &mut Sections) -> Self {
        let importances = sections.push("forest.importances".into(), &forest.feature_importances);
        let trees = forest
            .trees
            .iter()
            .enumerate()
            .map(|(i, t)| sections.push(format!("forest.tree.{i}"), &encode_nodes(&t.nodes)))
            .collect();
        ForestHeader { task: forest.task, config: forest.config, n_features: forest.n_features, seed: forest.seed, importances, trees }
    }

    fn read<'a>(&self, read: &impl Fn(usize) -> Result<&'a [f64], BundleError>) -> Result<RandomForest, BundleError> {
        let trees = self
            .trees
            .iter()
            .map(|&id| decode_nodes(read(id)?, self.n_features).map(|nodes| DecisionTree { nodes }))
            .collect::<Result<_, _>>()?;
        Ok(RandomForest {
            task: self.task,
            config: self.config,
            n_features: self.n_features,
            trees,
            feature_importances: read(self.importances)?.to_vec(),
            seed: self.seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MotionHeader {
    raw_errors: bool,
    lasso: LassoConfig,
    dictionaries: Vec<DictionaryHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictionaryHeader {
    class: MotionClass,
    dim: usize,
    n_atoms: usize,
    lambda: f64,
    atoms: usize,
}

/// Split: `[0, feature, threshold, left, right]`; leaf: `[1, n, values...]`.
fn encode_nodes(nodes: &[Node]) -> Vec<f64> {
    let mut out = Vec::new();
    for node in nodes {
        match node {
            Node::Split { feature, threshold, left, right } => {
                out.extend_from_slice(&[SPLIT_TAG, *feature as f64, *threshold, *left as f64, *right as f64]);
            }
            Node::Leaf { value } => {
                out.extend_from_slice(&[LEAF_TAG, value.len() as f64]);
                out.extend_from_slice(value);
            }
        }
    }
    out
}

fn decode_nodes(data: &[f64], n_features: usize) -> Result<Vec<Node>, BundleError> {
    let index = |v: f64| -> Result<usize, BundleError> {
        if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
            Ok(v as usize)
        } else {
            Err(corrupt(format!("bad node index {v}")))
        }
    };
    let mut nodes = Vec::new();
    let mut i = 0;
    while i < data.len() {
        if data[i] == SPLIT_TAG {
            let f = data.get(i..i + 5).ok_or_else(|| corrupt("truncated split node"))?;
            nodes.push(Node::Split { feature: index(f[1])?, threshold: f[2], left: index(f[3])?, right: index(f[4])? });
            i += 5;
        } else if data[i] == LEAF_TAG {
            let n = index(*data.get(i + 1).ok_or_else(|| corrupt("truncated leaf node"))?)?;
            let value = data.get(i + 2..i + 2 + n).ok_or_else(|| corrupt("truncated leaf node"))?;
            nodes.push(Node::Leaf { value: value.to_vec() });
            i += 2 + n;
        } else {
            return Err(corrupt(format!("unknown node tag {}", data[i])));
        }
    }
    // Children must point forward so prediction always terminates.
    for (k, node) in nodes.iter().enumerate() {
        if let Node::Split { feature, left, right, .. } = node {
            if *feature >= n_features || *left <= k || *right <= k || *left >= nodes.len() || *right >= nodes.len() {
                return Err(corrupt(format!("node {k} has invalid links")));
            }
        }
    }
    if nodes.is_empty() {
        return Err(corrupt("empty tree"));
    }
    Ok(nodes)
}
