use std::path::Path;

use super::tree::{Tree, TreeNode};
use super::ForestModel;
use crate::container::{strip_magic, Reader, Writer};
use crate::error::{Error, Result};

pub const FOREST_MAGIC: &[u8; 7] = b"INSPF1\0";

const INTERNAL: u8 = 0;
const LEAF: u8 = 1;

/// Layout after the magic: `num_trees u32 | num_features u32 |
/// features_per_split u32 | seed u64 | degenerate u8`, then per tree
/// `node_count u32` and the nodes in preorder. Each node is a marker byte;
/// internal nodes carry `feature u32 | threshold f32` (children follow in
/// preorder), leaves carry `illicit u32 | licit u32`.
pub fn encode_forest(f: &ForestModel) -> Vec<u8> {
    let mut w = Writer::with_magic(FOREST_MAGIC);
    w.u32(f.trees.len() as u32);
    w.u32(f.num_features as u32);
    w.u32(f.features_per_split as u32);
    w.u64(f.seed);
    w.u8(f.degenerate as u8);
    for t in &f.trees {
        w.u32(t.nodes.len() as u32);
        for n in &t.nodes {
            match n {
                TreeNode::Internal { feature, threshold, .. } => {
                    w.u8(INTERNAL);
                    w.u32(*feature);
                    w.f32(*threshold);
                }
                TreeNode::Leaf { counts } => {
                    w.u8(LEAF);
                    w.u32(counts[0]);
                    w.u32(counts[1]);
                }
            }
        }
    }
    w.buf
}

fn read_tree(r: &mut Reader<'_>, num_features: usize) -> Result<Tree> {
    let count = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(count.min(1 << 20));
    // parent slots still waiting for a child, innermost last
    let mut pending: Vec<(usize, bool)> = Vec::new();
    for idx in 0..count {
        if idx > 0 {
            let (p, is_left) = pending
                .pop()
                .ok_or_else(|| Error::CorruptArtifact("tree has extra nodes".into()))?;
            if let TreeNode::Internal { left, right, .. } = &mut nodes[p] {
                if is_left {
                    *left = idx as u32;
                } else {
                    *right = idx as u32;
                }
            }
        }
        match r.u8()? {
            INTERNAL => {
                let feature = r.u32()?;
                if feature as usize >= num_features {
                    return Err(Error::CorruptArtifact(format!("split on feature {feature}")));
                }
                let threshold = r.f32()?;
                nodes.push(TreeNode::Internal { feature, threshold, left: 0, right: 0 });
                pending.push((idx, false));
                pending.push((idx, true));
            }
            LEAF => {
                let counts = [r.u32()?, r.u32()?];
                if counts[0] + counts[1] == 0 {
                    return Err(Error::CorruptArtifact("empty leaf".into()));
                }
                nodes.push(TreeNode::Leaf { counts });
            }
            m => return Err(Error::CorruptArtifact(format!("unknown node marker {m}"))),
        }
    }
    if !pending.is_empty() || nodes.is_empty() {
        return Err(Error::CorruptArtifact("incomplete tree".into()));
    }
    Ok(Tree { nodes })
}

pub fn decode_forest(bytes: &[u8]) -> Result<ForestModel> {
    let body = strip_magic(bytes, FOREST_MAGIC)?;
    let mut r = Reader::new(body);
    let n_trees = r.u32()? as usize;
    let num_features = r.u32()? as usize;
    let features_per_split = r.u32()? as usize;
    let seed = r.u64()?;
    let degenerate = r.u8()? != 0;
    if n_trees == 0 {
        return Err(Error::CorruptArtifact("forest without trees".into()));
    }
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for _ in 0..n_trees {
        trees.push(read_tree(&mut r, num_features)?);
    }
    if !r.is_empty() {
        return Err(Error::CorruptArtifact("trailing bytes after forest".into()));
    }
    Ok(ForestModel {
        trees,
        num_features,
        features_per_split,
        seed,
        degenerate,
    })
}

pub fn save_forest(f: &ForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_forest(f)).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn load_forest(path: &Path) -> Result<ForestModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    decode_forest(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit_forest, ForestConfig, LabeledMatrix};
    use crate::graph::Label;
    use crate::nn::Matrix;

    #[test]
    fn round_trip_is_exact() {
        let rows: Vec<Vec<f32>> = (0..80).map(|i| vec![(i as f32 * 0.37).sin(), (i % 5) as f32, i as f32]).collect();
        let y: Vec<Label> = (0..80).map(|i| if (i * 7) % 5 < 2 { Label::Illicit } else { Label::Licit }).collect();
        let data = LabeledMatrix::new(Matrix::from_rows(&rows).unwrap(), y).unwrap();
        let f = fit_forest(&data, &ForestConfig { n_trees: 7, seed: 3, ..Default::default() }).unwrap();
        let bytes = encode_forest(&f);
        assert_eq!(&bytes[..7], b"INSPF1\0");
        let back = decode_forest(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_forest(&back), bytes);
    }

    #[test]
    fn rejects_other_magic() {
        assert!(matches!(decode_forest(b"INSPL1\0rest"), Err(Error::VersionMismatch { .. })));
        assert!(matches!(decode_forest(b"INSPF1\0\x01"), Err(Error::CorruptArtifact(_))));
    }
}
