//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "HMRK" | version u16 | endianness b'L' | float width u8 (= 8) | kind u8
//! scaler:  count u32, then per column: index u32, mean f64, has_sd u8, sd f64
//! payload: kind-specific, see below
//! ```
//!
//! * ANN: input width u32, hidden count u32, hidden widths u32…, then per
//!   layer the row-major weights followed by the biases.
//! * SVM: dim u32, support count u32, gamma f64, bias f64, coefficients,
//!   then row-major support vectors.
//! * Forest: width u32, tree count u32, each tree in pre-order: tag u8
//!   (0 leaf: label u8, fraction₀ f64, fraction₁ f64; 1 split: feature u32,
//!   threshold f64, left subtree, right subtree).
//!
//! Floats are stored as raw bits, so a round trip is bit-exact.

use std::path::Path;

use crate::ann::{AnnArchitecture, AnnModel, DenseLayer};
use crate::error::{Error, Result};
use crate::forest::{ForestModel, TreeNode};
use crate::model::{Classifier, Model, ModelKind};
use crate::scaler::{ColumnScale, ScalerParams};
use crate::svm::SvmModel;

pub const MAGIC: &[u8; 4] = b"HMRK";
pub const FORMAT_VERSION: u16 = 1;
const LITTLE_ENDIAN: u8 = b'L';
const FLOAT_WIDTH: u8 = 8;
/// Guards the recursive tree decoder against hostile input.
const MAX_TREE_DEPTH: usize = 10_000;

fn kind_tag(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Ann => 0,
        ModelKind::Svm => 1,
        ModelKind::Forest => 2,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model dimension exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take(8)?.try_into().unwrap())))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Check the length up front so a corrupt count cannot force a huge allocation.
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

pub fn encode_classifier(clf: &Classifier) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.u8(LITTLE_ENDIAN);
    w.u8(FLOAT_WIDTH);
    w.u8(kind_tag(clf.model.kind()));

    w.u32(clf.scaler.columns.len());
    for col in &clf.scaler.columns {
        w.u32(col.index);
        w.f64(col.mean);
        w.u8(u8::from(col.sd.is_some()));
        w.f64(col.sd.unwrap_or(0.0));
    }

    match &clf.model {
        Model::Ann(m) => {
            let arch = m.architecture();
            w.u32(arch.input_width);
            w.u32(arch.hidden.len());
            arch.hidden.iter().for_each(|&h| w.u32(h));
            for layer in m.layers() {
                w.f64s(&layer.weights);
                w.f64s(&layer.bias);
            }
        }
        Model::Svm(m) => {
            w.u32(m.dim());
            w.u32(m.n_support());
            w.f64(m.gamma());
            w.f64(m.bias());
            w.f64s(m.coefficients());
            m.support_vectors().for_each(|sv| w.f64s(sv));
        }
        Model::Forest(m) => {
            w.u32(m.width());
            w.u32(m.trees().len());
            for tree in m.trees() {
                encode_tree(&mut w, tree);
            }
        }
    }
    w.0
}

fn encode_tree(w: &mut Writer, node: &TreeNode) {
    match node {
        TreeNode::Leaf { label, fractions } => {
            w.u8(0);
            w.u8(*label);
            w.f64s(fractions);
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            w.u8(1);
            w.u32(*feature);
            w.f64(*threshold);
            encode_tree(w, left);
            encode_tree(w, right);
        }
    }
}

pub fn decode_classifier(bytes: &[u8]) -> Result<Classifier> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    if r.u8()? != LITTLE_ENDIAN {
        return Err(Error::Format("unsupported endianness tag".into()));
    }
    let width = r.u8()?;
    if width != FLOAT_WIDTH {
        return Err(Error::Format(format!("unsupported float width {width}")));
    }
    let kind = r.u8()?;

    let n_cols = r.u32()?;
    let mut columns = Vec::new();
    for _ in 0..n_cols {
        let index = r.u32()?;
        let mean = r.f64()?;
        let has_sd = r.u8()?;
        let sd = r.f64()?;
        columns.push(ColumnScale {
            index,
            mean,
            sd: match has_sd {
                0 => None,
                1 => Some(sd),
                t => return Err(Error::Format(format!("bad scale flag {t}"))),
            },
        });
    }
    let scaler = ScalerParams { columns };

    let model = match kind {
        0 => {
            let input = r.u32()?;
            let n_hidden = r.u32()?;
            let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let arch = AnnArchitecture::new(input, hidden).map_err(|e| Error::Format(e.to_string()))?;
            let widths = arch.widths();
            let mut layers = Vec::new();
            for pair in widths.windows(2) {
                let (inputs, outputs) = (pair[0], pair[1]);
                let weights = r.f64s(inputs * outputs)?;
                let bias = r.f64s(outputs)?;
                layers.push(DenseLayer {
                    inputs,
                    outputs,
                    weights,
                    bias,
                });
            }
            Model::Ann(AnnModel::from_layers(arch, layers).map_err(|e| Error::Format(e.to_string()))?)
        }
        1 => {
            let dim = r.u32()?;
            let n = r.u32()?;
            let gamma = r.f64()?;
            let bias = r.f64()?;
            let coef = r.f64s(n)?;
            let support = r.f64s(n * dim)?;
            Model::Svm(
                SvmModel::from_parts(dim, support, coef, bias, gamma)
                    .map_err(|e| Error::Format(e.to_string()))?,
            )
        }
        2 => {
            let width = r.u32()?;
            let n_trees = r.u32()?;
            let mut trees = Vec::new();
            for _ in 0..n_trees {
                trees.push(decode_tree(&mut r, 0)?);
            }
            Model::Forest(ForestModel::from_trees(width, trees).map_err(|e| Error::Format(e.to_string()))?)
        }
        t => return Err(Error::Format(format!("unknown model kind tag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after model payload",
            bytes.len() - r.pos
        )));
    }
    if let Some(col) = scaler.columns.iter().find(|c| c.index >= model.width()) {
        return Err(Error::Format(format!("scaler column {} out of range", col.index)));
    }
    Ok(Classifier { scaler, model })
}

fn decode_tree(r: &mut Reader<'_>, depth: usize) -> Result<TreeNode> {
    if depth > MAX_TREE_DEPTH {
        return Err(Error::Format("tree nesting too deep".into()));
    }
    match r.u8()? {
        0 => {
            let label = r.u8()?;
            if label > 1 {
                return Err(Error::Format(format!("leaf label {label}")));
            }
            let fractions = [r.f64()?, r.f64()?];
            Ok(TreeNode::Leaf { label, fractions })
        }
        1 => {
            let feature = r.u32()?;
            let threshold = r.f64()?;
            let left = Box::new(decode_tree(r, depth + 1)?);
            let right = Box::new(decode_tree(r, depth + 1)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        t => Err(Error::Format(format!("unknown node tag {t}"))),
    }
}

pub fn save_classifier(clf: &Classifier, path: &Path) -> Result<()> {
    std::fs::write(path, encode_classifier(clf))?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    decode_classifier(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::{init_network, AnnArchitecture};

    fn small_ann() -> Classifier {
        let arch = AnnArchitecture::new(3, vec![4, 2]).unwrap();
        Classifier {
            scaler: ScalerParams {
                columns: vec![
                    ColumnScale {
                        index: 0,
                        mean: 40.5,
                        sd: Some(12.25),
                    },
                    ColumnScale {
                        index: 2,
                        mean: 1.0,
                        sd: None,
                    },
                ],
            },
            model: Model::Ann(init_network(&arch, 5)),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_classifier(&small_ann());
        assert_eq!(&bytes[..4], b"HMRK");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
        assert_eq!(bytes[6], b'L');
        assert_eq!(bytes[7], 8);
        assert_eq!(bytes[8], 0);
    }

    #[test]
    fn ann_round_trip_is_exact() {
        let clf = small_ann();
        let back = decode_classifier(&encode_classifier(&clf)).unwrap();
        assert_eq!(back, clf);
    }

    #[test]
    fn forest_round_trip_is_exact() {
        let tree = TreeNode::Split {
            feature: 1,
            threshold: 0.1 + 0.2,
            left: Box::new(TreeNode::Leaf {
                label: 0,
                fractions: [2.0 / 3.0, 1.0 / 3.0],
            }),
            right: Box::new(TreeNode::Leaf {
                label: 1,
                fractions: [0.0, 1.0],
            }),
        };
        let clf = Classifier {
            scaler: ScalerParams::identity(),
            model: Model::Forest(ForestModel::from_trees(2, vec![tree.clone(), tree]).unwrap()),
        };
        assert_eq!(decode_classifier(&encode_classifier(&clf)).unwrap(), clf);
    }

    #[test]
    fn svm_round_trip_is_exact() {
        let model = SvmModel::from_parts(2, vec![0.1, -0.3, 1.0 / 7.0, 2.5], vec![0.75, -0.75], -1e-17, 1.0 / 33.0)
            .unwrap();
        let clf = Classifier {
            scaler: ScalerParams::identity(),
            model: Model::Svm(model),
        };
        assert_eq!(decode_classifier(&encode_classifier(&clf)).unwrap(), clf);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode_classifier(&small_ann());
        assert!(decode_classifier(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_classifier(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_classifier(&magic).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(decode_classifier(&version).is_err());
        let mut kind = bytes;
        kind[8] = 7;
        assert!(decode_classifier(&kind).is_err());
        assert!(decode_classifier(&[]).is_err());
    }
}
