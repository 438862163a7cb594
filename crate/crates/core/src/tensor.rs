//! Dense row-major matrices plus a reverse-mode autodiff tape.
//!
//! Bags have varying instance counts, so there is no static graph: each
//! forward pass records its operations on a fresh [`Tape`] and `backward`
//! replays them once in reverse. Nodes are plain indices into the tape's
//! arena; a tape and its tensors stay confined to one worker.
//!
//! Shape violations and domain errors are programming-contract failures
//! and panic with messages naming the offending shapes/values. Data-level
//! errors (files, manifests) are handled with `Result` elsewhere.

use crate::real::Real;

/// A dense rows×cols matrix. `grad`, when present, always matches `data`
/// in length, and is populated by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Tensor<R: Real> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<R>,
    pub requires_grad: bool,
    pub grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(rows: usize, cols: usize, data: Vec<R>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Leaf marked as a learnable parameter.
    pub fn param(rows: usize, cols: usize, data: Vec<R>) -> Self {
        let mut t = Self::new(rows, cols, data);
        t.requires_grad = true;
        t
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![R::zero(); rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, v: R) -> Self {
        Self::new(rows, cols, vec![v; rows * cols])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> R {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: R) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[R] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Convert the element type (used when moving f32 bag data onto an
    /// f64 gradient-check tape).
    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        )
    }

    pub fn transposed(&self) -> Tensor<R> {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op<R: Real> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
    },
    Transpose {
        a: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        k: R,
    },
    Neg {
        a: usize,
    },
    Relu {
        a: usize,
    },
    Sigmoid {
        a: usize,
    },
    Log {
        a: usize,
    },
    Recip {
        a: usize,
    },
    Rsqrt {
        a: usize,
    },
    Clamp {
        a: usize,
        lo: R,
        hi: R,
    },
    RowSoftmax {
        a: usize,
    },
    Sum {
        a: usize,
    },
    MeanRows {
        a: usize,
    },
    /// Row-normalized Student-t kernel between feature rows and centroid rows.
    StudentT {
        features: usize,
        centroids: usize,
    },
    /// Forward takes externally supplied discrete values; backward passes
    /// gradients through to the soft relaxation unchanged.
    StraightThrough {
        soft: usize,
    },
}

/// Reverse-mode tape. One per forward pass.
pub struct Tape<R: Real> {
    nodes: Vec<Tensor<R>>,
    ops: Vec<Op<R>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, value: Tensor<R>) -> TensorId {
        self.push(value, Op::Leaf)
    }

    /// Record a non-learnable leaf.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<R>) -> TensorId {
        self.push(Tensor::new(rows, cols, data), Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &Tensor<R> {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: TensorId) -> &[R] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].shape()
    }

    /// Gradient of the last `backward` pass. Panics if backward has not run.
    pub fn grad(&self, id: TensorId) -> &[R] {
        self.nodes[id.0]
            .grad
            .as_deref()
            .expect("backward() has not been run on this tape")
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>) -> TensorId {
        self.nodes.push(value);
        self.ops.push(op);
        TensorId(self.nodes.len() - 1)
    }

    // ── forward ops ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert!(
            ac == br,
            "matmul: shape mismatch {}x{} vs {}x{}",
            ar,
            ac,
            br,
            bc
        );
        let data = matmul_raw(self.data(a), self.data(b), ar, ac, bc);
        self.push(Tensor::new(ar, bc, data), Op::MatMul { a: a.0, b: b.0 })
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let t = self.nodes[a.0].transposed();
        self.push(t, Op::Transpose { a: a.0 })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let out = self.broadcast_zip(a, b, "add", |x, y| x + y);
        self.push(out, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let out = self.broadcast_zip(a, b, "sub", |x, y| x - y);
        self.push(out, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let out = self.broadcast_zip(a, b, "mul", |x, y| x * y);
        self.push(out, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, a: TensorId, k: R) -> TensorId {
        let out = self.unary_map(a, |x| x * k);
        self.push(out, Op::Scale { a: a.0, k })
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let out = self.unary_map(a, |x| -x);
        self.push(out, Op::Neg { a: a.0 })
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let out = self.unary_map(a, |x| if x > R::zero() { x } else { R::zero() });
        self.push(out, Op::Relu { a: a.0 })
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let out = self.unary_map(a, sigmoid_scalar);
        self.push(out, Op::Sigmoid { a: a.0 })
    }

    pub fn log(&mut self, a: TensorId) -> TensorId {
        for (i, &v) in self.data(a).iter().enumerate() {
            assert!(
                v > R::zero(),
                "log: domain error: non-positive input {} at flat index {}",
                v,
                i
            );
        }
        let out = self.unary_map(a, |x| x.ln());
        self.push(out, Op::Log { a: a.0 })
    }

    pub fn recip(&mut self, a: TensorId) -> TensorId {
        let out = self.unary_map(a, |x| R::one() / x);
        self.push(out, Op::Recip { a: a.0 })
    }

    pub fn rsqrt(&mut self, a: TensorId) -> TensorId {
        for (i, &v) in self.data(a).iter().enumerate() {
            assert!(
                v > R::zero(),
                "rsqrt: domain error: non-positive input {} at flat index {}",
                v,
                i
            );
        }
        let out = self.unary_map(a, |x| R::one() / x.sqrt());
        self.push(out, Op::Rsqrt { a: a.0 })
    }

    pub fn clamp(&mut self, a: TensorId, lo: R, hi: R) -> TensorId {
        assert!(lo <= hi, "clamp: lo {} exceeds hi {}", lo, hi);
        let out = self.unary_map(a, |x| {
            if x < lo {
                lo
            } else if x > hi {
                hi
            } else {
                x
            }
        });
        self.push(out, Op::Clamp { a: a.0, lo, hi })
    }

    /// Softmax over each row, with max-subtraction for stability.
    pub fn row_softmax(&mut self, a: TensorId) -> TensorId {
        let t = &self.nodes[a.0];
        let (rows, cols) = t.shape();
        let mut data = vec![R::zero(); rows * cols];
        for r in 0..rows {
            let row = t.row(r);
            let max = row.iter().cloned().fold(R::neg_infinity(), R::max);
            let mut sum = R::zero();
            for c in 0..cols {
                let e = (row[c] - max).exp();
                data[r * cols + c] = e;
                sum += e;
            }
            for c in 0..cols {
                data[r * cols + c] /= sum;
            }
        }
        self.push(Tensor::new(rows, cols, data), Op::RowSoftmax { a: a.0 })
    }

    /// Reduce to a 1×1 sum of all entries.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s = self.data(a).iter().cloned().sum();
        self.push(Tensor::new(1, 1, vec![s]), Op::Sum { a: a.0 })
    }

    /// Column means: rows×cols → 1×cols.
    pub fn mean_rows(&mut self, a: TensorId) -> TensorId {
        let t = &self.nodes[a.0];
        let (rows, cols) = t.shape();
        assert!(rows > 0, "mean_rows: empty input");
        let inv = R::one() / R::from_usize(rows);
        let mut data = vec![R::zero(); cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c] += t.get(r, c);
            }
        }
        for v in data.iter_mut() {
            *v *= inv;
        }
        self.push(Tensor::new(1, cols, data), Op::MeanRows { a: a.0 })
    }

    /// Row-normalized Student-t kernel assignment: for feature rows `f_s`
    /// and centroid rows `m_c`, entry (s,c) is
    /// `(1+||f_s-m_c||^2)^-1 / sum_j (1+||f_s-m_j||^2)^-1`.
    /// Differentiable w.r.t. both inputs.
    pub fn student_t_assign(&mut self, features: TensorId, centroids: TensorId) -> TensorId {
        let (s_n, d) = self.shape(features);
        let (c_n, d2) = self.shape(centroids);
        assert!(
            d == d2,
            "student_t_assign: shape mismatch {}x{} vs {}x{}",
            s_n,
            d,
            c_n,
            d2
        );
        let f = &self.nodes[features.0];
        let m = &self.nodes[centroids.0];
        let mut data = vec![R::zero(); s_n * c_n];
        for s in 0..s_n {
            let mut total = R::zero();
            for c in 0..c_n {
                let mut dist = R::zero();
                for k in 0..d {
                    let diff = f.get(s, k) - m.get(c, k);
                    dist += diff * diff;
                }
                let u = R::one() / (R::one() + dist);
                data[s * c_n + c] = u;
                total += u;
            }
            for c in 0..c_n {
                data[s * c_n + c] /= total;
            }
        }
        self.push(
            Tensor::new(s_n, c_n, data),
            Op::StudentT {
                features: features.0,
                centroids: centroids.0,
            },
        )
    }

    /// Straight-through estimator: the forward value is exactly `hard`
    /// (same shape as `soft`); the backward pass hands the incoming
    /// gradient to `soft` unchanged.
    pub fn straight_through(&mut self, soft: TensorId, hard: Vec<R>) -> TensorId {
        let (rows, cols) = self.shape(soft);
        assert_eq!(
            hard.len(),
            rows * cols,
            "straight_through: hard values length {} does not match {}x{}",
            hard.len(),
            rows,
            cols
        );
        self.push(
            Tensor::new(rows, cols, hard),
            Op::StraightThrough { soft: soft.0 },
        )
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a 1×1 loss. Every node reachable from the loss
    /// accumulates its adjoint; unreachable nodes keep an all-zero grad.
    pub fn backward(&mut self, loss: TensorId) {
        let (lr, lc) = self.shape(loss);
        assert!(
            lr == 1 && lc == 1,
            "backward: loss must be 1x1, got {}x{}",
            lr,
            lc
        );
        let n = self.nodes.len();
        for node in self.nodes.iter_mut() {
            node.grad = Some(vec![R::zero(); node.data.len()]);
        }
        self.nodes[loss.0].grad = Some(vec![R::one()]);

        for i in (0..n).rev() {
            let g = self.nodes[i].grad.clone().expect("grad allocated");
            if g.iter().all(|v| *v == R::zero()) {
                continue;
            }
            match self.ops[i].clone() {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (ar, ac) = self.nodes[a].shape();
                    let bc = self.nodes[b].cols;
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    let da = matmul_a_bt(&g, &self.nodes[b].data, ar, bc, ac);
                    let db = matmul_at_b(&self.nodes[a].data, &g, ar, ac, bc);
                    accumulate(&mut self.nodes[a].grad, &da);
                    accumulate(&mut self.nodes[b].grad, &db);
                }
                Op::Transpose { a } => {
                    let (or_, oc) = self.nodes[i].shape();
                    let mut da = vec![R::zero(); or_ * oc];
                    for r in 0..or_ {
                        for c in 0..oc {
                            da[c * or_ + r] = g[r * oc + c];
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Add { a, b } => {
                    self.backward_broadcast(a, &g, |x| x);
                    self.backward_broadcast(b, &g, |x| x);
                }
                Op::Sub { a, b } => {
                    self.backward_broadcast(a, &g, |x| x);
                    self.backward_broadcast(b, &g, |x| -x);
                }
                Op::Mul { a, b } => {
                    let (or_, oc) = self.nodes[i].shape();
                    let da: Vec<R> = (0..g.len())
                        .map(|k| g[k] * broadcast_at(&self.nodes[b], k, or_, oc))
                        .collect();
                    let db: Vec<R> = (0..g.len())
                        .map(|k| g[k] * broadcast_at(&self.nodes[a], k, or_, oc))
                        .collect();
                    self.backward_broadcast_vec(a, &da);
                    self.backward_broadcast_vec(b, &db);
                }
                Op::Scale { a, k } => {
                    let da: Vec<R> = g.iter().map(|&v| v * k).collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Neg { a } => {
                    let da: Vec<R> = g.iter().map(|&v| -v).collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Relu { a } => {
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[a].data.iter())
                        .map(|(&gv, &x)| if x > R::zero() { gv } else { R::zero() })
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Sigmoid { a } => {
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[i].data.iter())
                        .map(|(&gv, &s)| gv * s * (R::one() - s))
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Log { a } => {
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[a].data.iter())
                        .map(|(&gv, &x)| gv / x)
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Recip { a } => {
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[i].data.iter())
                        .map(|(&gv, &out)| -gv * out * out)
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Rsqrt { a } => {
                    let half = R::from_f64(0.5);
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[a].data.iter().zip(self.nodes[i].data.iter()))
                        .map(|(&gv, (&x, &out))| -gv * half * out / x)
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Clamp { a, lo, hi } => {
                    let da: Vec<R> = g
                        .iter()
                        .zip(self.nodes[a].data.iter())
                        .map(|(&gv, &x)| if x >= lo && x <= hi { gv } else { R::zero() })
                        .collect();
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::RowSoftmax { a } => {
                    let out = &self.nodes[i];
                    let (rows, cols) = out.shape();
                    let mut da = vec![R::zero(); rows * cols];
                    for r in 0..rows {
                        let mut dot = R::zero();
                        for c in 0..cols {
                            dot += g[r * cols + c] * out.get(r, c);
                        }
                        for c in 0..cols {
                            da[r * cols + c] = out.get(r, c) * (g[r * cols + c] - dot);
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::Sum { a } => {
                    let da = vec![g[0]; self.nodes[a].data.len()];
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::MeanRows { a } => {
                    let (rows, cols) = self.nodes[a].shape();
                    let inv = R::one() / R::from_usize(rows);
                    let mut da = vec![R::zero(); rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            da[r * cols + c] = g[c] * inv;
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &da);
                }
                Op::StudentT {
                    features,
                    centroids,
                } => {
                    let (da, db) = self.backward_student_t(features, centroids, i, &g);
                    accumulate(&mut self.nodes[features].grad, &da);
                    accumulate(&mut self.nodes[centroids].grad, &db);
                }
                Op::StraightThrough { soft } => {
                    accumulate(&mut self.nodes[soft].grad, &g);
                }
            }
        }
    }

    fn backward_student_t(
        &self,
        features: usize,
        centroids: usize,
        out: usize,
        g: &[R],
    ) -> (Vec<R>, Vec<R>) {
        let f = &self.nodes[features];
        let m = &self.nodes[centroids];
        let z = &self.nodes[out];
        let (s_n, d) = f.shape();
        let c_n = m.rows;
        let mut df = vec![R::zero(); s_n * d];
        let mut dm = vec![R::zero(); c_n * d];
        let two = R::from_f64(2.0);
        let mut u = vec![R::zero(); c_n];
        for s in 0..s_n {
            let mut total = R::zero();
            for c in 0..c_n {
                let mut dist = R::zero();
                for k in 0..d {
                    let diff = f.get(s, k) - m.get(c, k);
                    dist += diff * diff;
                }
                u[c] = R::one() / (R::one() + dist);
                total += u[c];
            }
            let mut dot = R::zero();
            for c in 0..c_n {
                dot += g[s * c_n + c] * z.get(s, c);
            }
            for c in 0..c_n {
                // d z/d u through the row normalization, then d u/d dist.
                let gu = (g[s * c_n + c] - dot) / total;
                let gdist = -u[c] * u[c] * gu;
                for k in 0..d {
                    let diff = f.get(s, k) - m.get(c, k);
                    let v = two * gdist * diff;
                    df[s * d + k] += v;
                    dm[c * d + k] -= v;
                }
            }
        }
        (df, dm)
    }

    // ── helpers ─────────────────────────────────────────────────────

    fn broadcast_zip(
        &self,
        a: TensorId,
        b: TensorId,
        name: &str,
        f: impl Fn(R, R) -> R,
    ) -> Tensor<R> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let (rows, cols) = if (ar, ac) == (br, bc) {
            (ar, ac)
        } else if ar == 1 && ac == 1 {
            (br, bc)
        } else if br == 1 && bc == 1 {
            (ar, ac)
        } else {
            panic!("{}: shape mismatch {}x{} vs {}x{}", name, ar, ac, br, bc);
        };
        let ta = &self.nodes[a.0];
        let tb = &self.nodes[b.0];
        let mut data = vec![R::zero(); rows * cols];
        for (k, v) in data.iter_mut().enumerate() {
            *v = f(
                broadcast_at(ta, k, rows, cols),
                broadcast_at(tb, k, rows, cols),
            );
        }
        Tensor::new(rows, cols, data)
    }

    fn unary_map(&self, a: TensorId, f: impl Fn(R) -> R) -> Tensor<R> {
        let t = &self.nodes[a.0];
        Tensor::new(t.rows, t.cols, t.data.iter().map(|&x| f(x)).collect())
    }

    /// Route a full-shape gradient back to a possibly 1×1-broadcast operand.
    fn backward_broadcast(&mut self, target: usize, g: &[R], f: impl Fn(R) -> R) {
        let mapped: Vec<R> = g.iter().map(|&v| f(v)).collect();
        self.backward_broadcast_vec(target, &mapped);
    }

    fn backward_broadcast_vec(&mut self, target: usize, g: &[R]) {
        let len = self.nodes[target].data.len();
        if len == g.len() {
            accumulate(&mut self.nodes[target].grad, g);
        } else {
            // target is 1×1: contributions sum into the single cell
            let s: R = g.iter().cloned().sum();
            if let Some(grad) = self.nodes[target].grad.as_mut() {
                grad[0] += s;
            }
        }
    }
}

#[inline]
fn broadcast_at<R: Real>(t: &Tensor<R>, flat: usize, _rows: usize, _cols: usize) -> R {
    if t.data.len() == 1 {
        t.data[0]
    } else {
        t.data[flat]
    }
}

#[inline]
fn sigmoid_scalar<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

fn accumulate<R: Real>(target: &mut Option<Vec<R>>, src: &[R]) {
    let g = target.as_mut().expect("grad allocated");
    for (t, s) in g.iter_mut().zip(src.iter()) {
        *t += *s;
    }
}

/// C[m,n] = A[m,k] · B[k,n]
pub fn matmul_raw<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize) -> Vec<R> {
    let mut out = vec![R::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == R::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}

/// C[m,k] = A[m,n] · Bᵀ where B is [k,n]
fn matmul_a_bt<R: Real>(a: &[R], b: &[R], m: usize, n: usize, k: usize) -> Vec<R> {
    let mut out = vec![R::zero(); m * k];
    for i in 0..m {
        for j in 0..k {
            let mut s = R::zero();
            for p in 0..n {
                s += a[i * n + p] * b[j * n + p];
            }
            out[i * k + j] = s;
        }
    }
    out
}

/// C[k,n] = Aᵀ · B where A is [m,k], B is [m,n]
fn matmul_at_b<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize) -> Vec<R> {
    let mut out = vec![R::zero(); k * n];
    for p in 0..m {
        for i in 0..k {
            let av = a[p * k + i];
            if av == R::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}
