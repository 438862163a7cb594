//! Learnable parameter containers and their on-disk format.
//!
//! A model file is a text header followed by raw little-endian f32
//! payloads, one per declared tensor, in declared order:
//!
//! ```text
//! MICROMIL-MODEL v1
//! kind micromil            (or meanpool)
//! dim 32
//! ...model fields...
//! adam_step 7000
//! tensor centroids 16 32
//! tensor score_w 32 1
//! ...
//! end
//! <raw f32 little-endian payloads>
//! ```
//!
//! Writing is deterministic, so equal parameters produce byte-identical
//! files, and a save/load round-trip is exact.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::gnn::GnnParams;
use crate::graph::EdgeMethod;
use crate::real::Real;
use crate::rie::RieSelect;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Whether centroids are trained end-to-end or frozen at their k-means
/// initialization (hard nearest-centroid assignments).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterMode {
    Dce,
    Kmeans,
}

impl std::fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMode::Dce => "dce",
            ClusterMode::Kmeans => "kmeans",
        })
    }
}

impl std::str::FromStr for ClusterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dce" => Ok(ClusterMode::Dce),
            "kmeans" => Ok(ClusterMode::Kmeans),
            other => Err(format!(
                "unknown cluster mode `{}` (expected dce|kmeans)",
                other
            )),
        }
    }
}

/// Full MicroMIL parameter set.
#[derive(Clone, Debug)]
pub struct MicroMilParams<R: Real> {
    pub clusters: usize,
    pub cluster_mode: ClusterMode,
    pub rie_select: RieSelect,
    pub edge_method: EdgeMethod,
    pub tau: f64,
    pub dropout: f64,
    /// C×d learnable centroids (frozen under `ClusterMode::Kmeans`).
    pub centroids: Tensor<R>,
    /// d×1 instance scoring vector.
    pub score_w: Tensor<R>,
    pub gnn: GnnParams<R>,
}

/// The trivial comparison baseline: `sigmoid(w · mean(instances) + b)`.
#[derive(Clone, Debug)]
pub struct MeanPoolParams<R: Real> {
    pub w: Tensor<R>,
    pub b: Tensor<R>,
}

#[derive(Clone, Debug)]
pub enum Model<R: Real> {
    MicroMil(MicroMilParams<R>),
    MeanPool(MeanPoolParams<R>),
}

impl<R: Real> Model<R> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::MicroMil(_) => "micromil",
            Model::MeanPool(_) => "meanpool",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::MicroMil(p) => p.centroids.cols,
            Model::MeanPool(p) => p.w.rows,
        }
    }
}

/// First/second Adam moments plus the shared step counter, aligned with
/// [`ModelParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct AdamState<R: Real> {
    pub m: Vec<Tensor<R>>,
    pub v: Vec<Tensor<R>>,
    pub step: u64,
}

/// All learnable state of one trained model.
#[derive(Clone, Debug)]
pub struct ModelParams<R: Real> {
    pub model: Model<R>,
    pub adam: AdamState<R>,
}

impl<R: Real> ModelParams<R> {
    /// Wrap a model with zeroed optimizer state.
    pub fn new(model: Model<R>) -> Self {
        let shapes: Vec<(usize, usize)> =
            tensor_refs(&model).iter().map(|(_, t)| t.shape()).collect();
        let m = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        let v = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        ModelParams {
            model,
            adam: AdamState { m, v, step: 0 },
        }
    }

    /// Named learnable tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<R>)> {
        tensor_refs(&self.model)
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    /// Mutable access to the i-th learnable tensor (canonical order).
    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor<R> {
        match &mut self.model {
            Model::MicroMil(p) => {
                let l = p.gnn.layer_weights.len();
                match i {
                    0 => &mut p.centroids,
                    1 => &mut p.score_w,
                    k if k >= 2 && k < 2 + l => &mut p.gnn.layer_weights[k - 2],
                    k if k == 2 + l => &mut p.gnn.classifier_w,
                    k if k == 3 + l => &mut p.gnn.classifier_b,
                    _ => panic!("tensor index {} out of range", i),
                }
            }
            Model::MeanPool(p) => match i {
                0 => &mut p.w,
                1 => &mut p.b,
                _ => panic!("tensor index {} out of range", i),
            },
        }
    }
}

fn tensor_refs<R: Real>(model: &Model<R>) -> Vec<(String, &Tensor<R>)> {
    match model {
        Model::MicroMil(p) => {
            let mut out: Vec<(String, &Tensor<R>)> = vec![
                ("centroids".to_string(), &p.centroids),
                ("score_w".to_string(), &p.score_w),
            ];
            for (i, w) in p.gnn.layer_weights.iter().enumerate() {
                out.push((format!("gnn_layer_{}", i), w));
            }
            out.push(("classifier_w".to_string(), &p.gnn.classifier_w));
            out.push(("classifier_b".to_string(), &p.gnn.classifier_b));
            out
        }
        Model::MeanPool(p) => {
            vec![("pool_w".to_string(), &p.w), ("pool_b".to_string(), &p.b)]
        }
    }
}

impl ModelParams<f32> {
    /// Serialize to the container format described in the module docs.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = String::from("MICROMIL-MODEL v1\n");
        header.push_str(&format!("kind {}\n", self.model.kind_name()));
        header.push_str(&format!("dim {}\n", self.model.dim()));
        if let Model::MicroMil(p) = &self.model {
            header.push_str(&format!("clusters {}\n", p.clusters));
            header.push_str(&format!("cluster_mode {}\n", p.cluster_mode));
            header.push_str(&format!("rie_select {}\n", p.rie_select));
            header.push_str(&format!("edge_method {}\n", p.edge_method));
            header.push_str(&format!("tau {}\n", p.tau));
            header.push_str(&format!("dropout {}\n", p.dropout));
            header.push_str(&format!("hidden {}\n", p.gnn.hidden));
            header.push_str(&format!("layers {}\n", p.gnn.layers));
        }
        header.push_str(&format!("adam_step {}\n", self.adam.step));

        let named = self.tensors();
        let mut order: Vec<(String, &Tensor<f32>)> = Vec::new();
        for (name, t) in &named {
            order.push((name.clone(), t));
        }
        for (i, t) in self.adam.m.iter().enumerate() {
            order.push((format!("adam_m_{}", i), t));
        }
        for (i, t) in self.adam.v.iter().enumerate() {
            order.push((format!("adam_v_{}", i), t));
        }
        for (name, t) in &order {
            header.push_str(&format!("tensor {} {} {}\n", name, t.rows, t.cols));
        }
        header.push_str("end\n");

        let mut bytes = header.into_bytes();
        for (_, t) in &order {
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Load a model file written by [`ModelParams::save`].
    pub fn load(path: &Path) -> Result<ModelParams<f32>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let display = path.display().to_string();
        let bad = |reason: String| Error::BadModelFile {
            path: display.clone(),
            reason,
        };

        // header is ASCII lines up to and including "end\n"
        let mut offset = 0usize;
        let mut fields: HashMap<String, String> = HashMap::new();
        let mut tensor_decls: Vec<(String, usize, usize)> = Vec::new();
        let mut first = true;
        let mut saw_end = false;
        while offset < bytes.len() {
            let line_end = bytes[offset..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unterminated header".into()))?;
            let line = std::str::from_utf8(&bytes[offset..offset + line_end])
                .map_err(|_| bad("non-UTF-8 header line".into()))?;
            offset += line_end + 1;
            if first {
                if line != "MICROMIL-MODEL v1" {
                    return Err(bad(format!("bad signature `{}`", line)));
                }
                first = false;
                continue;
            }
            if line == "end" {
                saw_end = true;
                break;
            }
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or_default();
            let value = parts.next().unwrap_or_default();
            if key == "tensor" {
                let p: Vec<&str> = value.split(' ').collect();
                if p.len() != 3 {
                    return Err(bad(format!("malformed tensor line `{}`", line)));
                }
                let rows: usize = p[1]
                    .parse()
                    .map_err(|_| bad(format!("bad rows in `{}`", line)))?;
                let cols: usize = p[2]
                    .parse()
                    .map_err(|_| bad(format!("bad cols in `{}`", line)))?;
                tensor_decls.push((p[0].to_string(), rows, cols));
            } else {
                fields.insert(key.to_string(), value.to_string());
            }
        }
        if !saw_end {
            return Err(bad("missing `end` marker".into()));
        }

        // payloads, in declared order
        let mut tensors: HashMap<String, Tensor<f32>> = HashMap::new();
        for (name, rows, cols) in &tensor_decls {
            let n = rows * cols * 4;
            if offset + n > bytes.len() {
                return Err(bad(format!("truncated payload for tensor `{}`", name)));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows * cols {
                let off = offset + 4 * i;
                data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
            }
            offset += n;
            tensors.insert(name.clone(), Tensor::new(*rows, *cols, data));
        }
        if offset != bytes.len() {
            return Err(bad(format!(
                "{} trailing bytes after declared payloads",
                bytes.len() - offset
            )));
        }

        let get_field = |k: &str| -> Result<&String> {
            fields.get(k).ok_or_else(|| Error::BadModelFile {
                path: display.clone(),
                reason: format!("missing field `{}`", k),
            })
        };
        let mut take = |name: &str| -> Result<Tensor<f32>> {
            tensors.remove(name).ok_or_else(|| Error::BadModelFile {
                path: display.clone(),
                reason: format!("missing tensor `{}`", name),
            })
        };

        let kind = get_field("kind")?.clone();
        let adam_step: u64 = get_field("adam_step")?
            .parse()
            .map_err(|_| bad("bad adam_step".into()))?;

        let model = match kind.as_str() {
            "micromil" => {
                let clusters: usize = get_field("clusters")?
                    .parse()
                    .map_err(|_| bad("bad clusters".into()))?;
                let cluster_mode: ClusterMode = get_field("cluster_mode")?
                    .parse()
                    .map_err(|e: String| bad(e))?;
                let rie_select: RieSelect = get_field("rie_select")?
                    .parse()
                    .map_err(|e: String| bad(e))?;
                let edge_method: EdgeMethod = get_field("edge_method")?
                    .parse()
                    .map_err(|e: String| bad(e))?;
                let tau: f64 = get_field("tau")?
                    .parse()
                    .map_err(|_| bad("bad tau".into()))?;
                let dropout: f64 = get_field("dropout")?
                    .parse()
                    .map_err(|_| bad("bad dropout".into()))?;
                let hidden: usize = get_field("hidden")?
                    .parse()
                    .map_err(|_| bad("bad hidden".into()))?;
                let layers: usize = get_field("layers")?
                    .parse()
                    .map_err(|_| bad("bad layers".into()))?;
                let mut centroids = take("centroids")?;
                centroids.requires_grad = cluster_mode == ClusterMode::Dce;
                let mut score_w = take("score_w")?;
                score_w.requires_grad = true;
                let mut layer_weights = Vec::with_capacity(layers);
                for i in 0..layers {
                    let mut w = take(&format!("gnn_layer_{}", i))?;
                    w.requires_grad = true;
                    layer_weights.push(w);
                }
                let mut classifier_w = take("classifier_w")?;
                classifier_w.requires_grad = true;
                let mut classifier_b = take("classifier_b")?;
                classifier_b.requires_grad = true;
                Model::MicroMil(MicroMilParams {
                    clusters,
                    cluster_mode,
                    rie_select,
                    edge_method,
                    tau,
                    dropout,
                    centroids,
                    score_w,
                    gnn: GnnParams {
                        layer_weights,
                        classifier_w,
                        classifier_b,
                        hidden,
                        layers,
                    },
                })
            }
            "meanpool" => {
                let mut w = take("pool_w")?;
                w.requires_grad = true;
                let mut b = take("pool_b")?;
                b.requires_grad = true;
                Model::MeanPool(MeanPoolParams { w, b })
            }
            other => return Err(bad(format!("unknown model kind `{}`", other))),
        };

        let count = tensor_refs(&model).len();
        let mut m = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for i in 0..count {
            m.push(take(&format!("adam_m_{}", i))?);
            v.push(take(&format!("adam_v_{}", i))?);
        }
        let params = ModelParams {
            model,
            adam: AdamState {
                m,
                v,
                step: adam_step,
            },
        };
        for (i, (name, t)) in params.tensors().iter().enumerate() {
            let (mr, mc) = params.adam.m[i].shape();
            if (mr, mc) != t.shape() {
                return Err(bad(format!("adam moment shape mismatch for `{}`", name)));
            }
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};

    fn sample_params() -> ModelParams<f32> {
        let mut rng = stream(9, StreamKind::Init, 0, 0);
        let gnn = GnnParams::init(4, 8, 2, &mut rng);
        let mut centroids = Tensor::param(3, 4, (0..12).map(|i| i as f32 * 0.25 - 1.0).collect());
        centroids.requires_grad = true;
        let score_w = Tensor::param(4, 1, vec![0.1, -0.2, 0.3, 0.4]);
        let model = Model::MicroMil(MicroMilParams {
            clusters: 3,
            cluster_mode: ClusterMode::Dce,
            rie_select: RieSelect::Gumbel,
            edge_method: EdgeMethod::Cosine,
            tau: 1.0,
            dropout: 0.5,
            centroids,
            score_w,
            gnn,
        });
        ModelParams::new(model)
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut params = sample_params();
        params.adam.step = 41;
        params.adam.m[0].data[0] = 0.125;
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(loaded.adam.step, 41);
        for ((an, at), (bn, bt)) in params.tensors().iter().zip(loaded.tensors().iter()) {
            assert_eq!(an, bn);
            assert_eq!(at.data, bt.data, "tensor {}", an);
        }
        assert_eq!(params.adam.m[0].data, loaded.adam.m[0].data);
        // second save is byte-identical
        let path2 = dir.path().join("model2.bin");
        loaded.save(&path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn meanpool_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.bin");
        let model = Model::MeanPool(MeanPoolParams {
            w: Tensor::param(3, 1, vec![0.5, -1.5, 2.0]),
            b: Tensor::param(1, 1, vec![0.25]),
        });
        let params = ModelParams::new(model);
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        match &loaded.model {
            Model::MeanPool(p) => {
                assert_eq!(p.w.data, vec![0.5, -1.5, 2.0]);
                assert_eq!(p.b.data, vec![0.25]);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn corrupt_signature_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        fs::write(&path, b"NOT-A-MODEL\nend\n").unwrap();
        let err = ModelParams::load(&path).unwrap_err();
        assert!(err.to_string().contains("bad signature"), "{}", err);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let params = sample_params();
        params.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        let err = ModelParams::load(&path).unwrap_err();
        assert!(
            err.to_string().contains("truncated") || err.to_string().contains("trailing"),
            "{}",
            err
        );
    }

    #[test]
    fn tensor_mut_indexing_matches_tensors_order() {
        let mut params = sample_params();
        let names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(
            names,
            vec![
                "centroids",
                "score_w",
                "gnn_layer_0",
                "gnn_layer_1",
                "classifier_w",
                "classifier_b"
            ]
        );
        for i in 0..params.tensor_count() {
            let shape_before = params.tensors()[i].1.shape();
            let t = params.tensor_mut(i);
            assert_eq!(t.shape(), shape_before);
        }
    }
}
