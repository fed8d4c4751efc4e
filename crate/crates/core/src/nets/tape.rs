//! Reverse-mode differentiation over dense row-major matrices.

use super::{Mat, NetError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    /// `x W + b` with `W: in × out`, `b: 1 × out`.
    Affine(Var, Var, Var),
    MatMul(Var, Var),
    Elu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    BroadcastRows(Var),
    StopGrad,
    Reshape(Var),
    /// Sliding windows over `t_in` time steps per sample: rows `(b, t_out)`,
    /// columns `(k, channel)`.
    Im2Col { x: Var, t_in: usize, kernel: usize, stride: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Option<Mat>,
}

/// Records one forward pass. Parameter values are read from the borrowed store.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, aligned with the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub params: Vec<Option<Mat>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { params: vec![None; store.len()] }
    }

    pub fn get(&self, id: usize) -> Option<&Mat> {
        self.params[id].as_ref()
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if let Some(b) = b {
                match a {
                    Some(a) => a.add_assign(b),
                    None => *a = Some(b.clone()),
                }
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.iter().flatten().map(|g| g.data.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.params.iter_mut().flatten() {
            g.data.iter_mut().for_each(|x| *x *= s);
        }
    }
}

pub(crate) fn gemm(a: &Mat, ta: bool, b: &Mat, tb: bool, c: &mut Mat, beta: f64) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "inner dimensions");
    assert_eq!((c.rows, c.cols), (m, n), "output shape");
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the strides above describe exactly the row-major buffers of
    // `a`, `b` and `c`, whose sizes were checked against m, k, n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store, nodes: Vec::with_capacity(64) }
    }

    pub fn value(&self, v: Var) -> &Mat {
        match (&self.nodes[v.0].op, &self.nodes[v.0].value) {
            (Op::Param(i), _) => &self.store.params[*i].value,
            (_, Some(m)) => m,
            _ => unreachable!("every non-parameter node stores its value"),
        }
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(x).map(f);
        self.push(op, v)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, NetError> {
        let (ma, mb) = (self.value(a), self.value(b));
        ma.same_shape(mb)?;
        let data = ma.data.iter().zip(&mb.data).map(|(x, y)| f(*x, *y)).collect();
        let v = Mat { rows: ma.rows, cols: ma.cols, data };
        Ok(self.push(op, v))
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        Var(self.nodes.len() - 1)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NetError> {
        let (mx, mw, mb) = (self.value(x), self.value(w), self.value(b));
        if mx.cols != mw.rows || mb.rows != 1 || mb.cols != mw.cols {
            return Err(NetError::Shape(format!(
                "affine: x {}x{}, W {}x{}, b {}x{}",
                mx.rows, mx.cols, mw.rows, mw.cols, mb.rows, mb.cols
            )));
        }
        let mut y = Mat::zeros(mx.rows, mw.cols);
        for r in 0..y.rows {
            y.row_mut(r).copy_from_slice(&mb.data);
        }
        gemm(mx, false, mw, false, &mut y, 1.0);
        Ok(self.push(Op::Affine(x, w, b), y))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NetError> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols != mb.rows {
            return Err(NetError::Shape(format!("matmul: {}x{} by {}x{}", ma.rows, ma.cols, mb.rows, mb.cols)));
        }
        let mut y = Mat::zeros(ma.rows, mb.cols);
        gemm(ma, false, mb, false, &mut y, 0.0);
        Ok(self.push(Op::MatMul(a, b), y))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.map(x, Op::Elu(x), elu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.map(x, Op::AddScalar(x), |v| v + s)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x), |v| v * v)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NetError> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NetError> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NetError> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NetError> {
        self.zip(a, b, Op::Min(a, b), f64::min)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Op::Sum(x), Mat::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let s = m.data.iter().sum::<f64>() / m.data.len().max(1) as f64;
        self.push(Op::Mean(x), Mat::scalar(s))
    }

    /// Per-row sums as a column.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let data = (0..m.rows).map(|r| m.row(r).iter().sum()).collect();
        let v = Mat { rows: m.rows, cols: 1, data };
        self.push(Op::RowSum(x), v)
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var, NetError> {
        let rows = self.value(xs[0]).rows;
        if xs.iter().any(|x| self.value(*x).rows != rows) {
            return Err(NetError::Shape("concat: row counts differ".into()));
        }
        let cols: usize = xs.iter().map(|x| self.value(*x).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for x in xs {
                let m = self.value(*x);
                out.row_mut(r)[c0..c0 + m.cols].copy_from_slice(m.row(r));
                c0 += m.cols;
            }
        }
        Ok(self.push(Op::ConcatCols(xs.to_vec()), out))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NetError> {
        let m = self.value(x);
        if start + len > m.cols {
            return Err(NetError::Shape(format!("slice {start}+{len} of {} columns", m.cols)));
        }
        let mut out = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols(x, start), out))
    }

    /// Repeats a single row `rows` times.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var, NetError> {
        let m = self.value(x);
        if m.rows != 1 {
            return Err(NetError::Shape("broadcast needs a single row".into()));
        }
        let mut out = Mat::zeros(rows, m.cols);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&m.data);
        }
        Ok(self.push(Op::BroadcastRows(x), out))
    }

    /// Identity forward; blocks gradient flow backward.
    pub fn stop_grad(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.push(Op::StopGrad, v)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, NetError> {
        let m = self.value(x);
        if rows * cols != m.data.len() {
            return Err(NetError::Shape(format!("reshape {}x{} to {rows}x{cols}", m.rows, m.cols)));
        }
        let v = Mat { rows, cols, data: m.data.clone() };
        Ok(self.push(Op::Reshape(x), v))
    }

    /// `x` holds `batch · t_in` rows of channels; returns `batch · t_out`
    /// rows of `kernel · channels` windows.
    pub fn im2col(&mut self, x: Var, t_in: usize, kernel: usize, stride: usize) -> Result<Var, NetError> {
        let m = self.value(x);
        if t_in == 0 || !m.rows.is_multiple_of(t_in) || kernel > t_in || stride == 0 {
            return Err(NetError::Shape(format!("im2col: {} rows, t_in {t_in}, kernel {kernel}", m.rows)));
        }
        let batch = m.rows / t_in;
        let t_out = (t_in - kernel) / stride + 1;
        let c = m.cols;
        let mut out = Mat::zeros(batch * t_out, kernel * c);
        for b in 0..batch {
            for t in 0..t_out {
                let dst = out.row_mut(b * t_out + t);
                for k in 0..kernel {
                    dst[k * c..(k + 1) * c].copy_from_slice(m.row(b * t_in + t * stride + k));
                }
            }
        }
        Ok(self.push(Op::Im2Col { x, t_in, kernel, stride }, out))
    }

    /// Gradients of the scalar `loss` with respect to every parameter it depends on.
    pub fn backward(&self, loss: Var) -> Result<Grads, NetError> {
        let lv = self.value(loss);
        if lv.data.len() != 1 {
            return Err(NetError::Shape("backward needs a scalar loss".into()));
        }
        let mut adj: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Mat::scalar(1.0));
        let mut grads = Grads::zeros_like(self.store);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let send = |adj: &mut Vec<Option<Mat>>, v: Var, m: Mat| match &mut adj[v.0] {
                Some(a) => a.add_assign(&m),
                slot => *slot = Some(m),
            };
            match &node.op {
                Op::Input | Op::StopGrad => {}
                Op::Param(id) => match &mut grads.params[*id] {
                    Some(a) => a.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::Affine(x, w, b) => {
                    let (mx, mw) = (self.value(*x), self.value(*w));
                    let mut dx = Mat::zeros(mx.rows, mx.cols);
                    gemm(&g, false, mw, true, &mut dx, 0.0);
                    let mut dw = Mat::zeros(mw.rows, mw.cols);
                    gemm(mx, true, &g, false, &mut dw, 0.0);
                    let mut db = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, v) in db.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(&mut adj, *x, dx);
                    send(&mut adj, *w, dw);
                    send(&mut adj, *b, db);
                }
                Op::MatMul(a, b) => {
                    let (ma, mb) = (self.value(*a), self.value(*b));
                    let mut da = Mat::zeros(ma.rows, ma.cols);
                    gemm(&g, false, mb, true, &mut da, 0.0);
                    let mut db = Mat::zeros(mb.rows, mb.cols);
                    gemm(ma, true, &g, false, &mut db, 0.0);
                    send(&mut adj, *a, da);
                    send(&mut adj, *b, db);
                }
                Op::Elu(x) => {
                    let y = self.value(Var(i));
                    let d = g.zip_map(y, |gi, yi| if yi > 0.0 { gi } else { gi * (yi + 1.0) });
                    send(&mut adj, *x, d);
                }
                Op::Tanh(x) => {
                    let y = self.value(Var(i));
                    send(&mut adj, *x, g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi)));
                }
                Op::Sigmoid(x) => {
                    let y = self.value(Var(i));
                    send(&mut adj, *x, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi)));
                }
                Op::Exp(x) => {
                    let y = self.value(Var(i));
                    send(&mut adj, *x, g.zip_map(y, |gi, yi| gi * yi));
                }
                Op::Add(a, b) => {
                    send(&mut adj, *a, g.clone());
                    send(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    send(&mut adj, *b, g.map(|v| -v));
                    send(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |gi, bi| gi * bi);
                    let db = g.zip_map(self.value(*a), |gi, ai| gi * ai);
                    send(&mut adj, *a, da);
                    send(&mut adj, *b, db);
                }
                Op::Min(a, b) => {
                    let (ma, mb) = (self.value(*a), self.value(*b));
                    let mut da = Mat::zeros(g.rows, g.cols);
                    let mut db = Mat::zeros(g.rows, g.cols);
                    for k in 0..g.data.len() {
                        if ma.data[k] <= mb.data[k] {
                            da.data[k] = g.data[k];
                        } else {
                            db.data[k] = g.data[k];
                        }
                    }
                    send(&mut adj, *a, da);
                    send(&mut adj, *b, db);
                }
                Op::Scale(x, s) => send(&mut adj, *x, g.map(|v| v * s)),
                Op::AddScalar(x) => send(&mut adj, *x, g),
                Op::Square(x) => {
                    let d = g.zip_map(self.value(*x), |gi, xi| 2.0 * gi * xi);
                    send(&mut adj, *x, d);
                }
                Op::Clamp(x, lo, hi) => {
                    let d = g.zip_map(self.value(*x), |gi, xi| if xi >= *lo && xi <= *hi { gi } else { 0.0 });
                    send(&mut adj, *x, d);
                }
                Op::Sum(x) => {
                    let m = self.value(*x);
                    send(&mut adj, *x, Mat::filled(m.rows, m.cols, g.data[0]));
                }
                Op::Mean(x) => {
                    let m = self.value(*x);
                    let n = m.data.len().max(1) as f64;
                    send(&mut adj, *x, Mat::filled(m.rows, m.cols, g.data[0] / n));
                }
                Op::RowSum(x) => {
                    let m = self.value(*x);
                    let mut d = Mat::zeros(m.rows, m.cols);
                    for r in 0..m.rows {
                        d.row_mut(r).iter_mut().for_each(|v| *v = g.data[r]);
                    }
                    send(&mut adj, *x, d);
                }
                Op::ConcatCols(xs) => {
                    let mut c0 = 0;
                    for x in xs {
                        let cols = self.value(*x).cols;
                        let mut d = Mat::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        c0 += cols;
                        send(&mut adj, *x, d);
                    }
                }
                Op::SliceCols(x, start) => {
                    let m = self.value(*x);
                    let mut d = Mat::zeros(m.rows, m.cols);
                    for r in 0..m.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(&mut adj, *x, d);
                }
                Op::BroadcastRows(x) => {
                    let mut d = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (a, v) in d.data.iter_mut().zip(g.row(r)) {
                            *a += v;
                        }
                    }
                    send(&mut adj, *x, d);
                }
                Op::Reshape(x) => {
                    let m = self.value(*x);
                    send(&mut adj, *x, Mat { rows: m.rows, cols: m.cols, data: g.data });
                }
                Op::Im2Col { x, t_in, kernel, stride } => {
                    let m = self.value(*x);
                    let c = m.cols;
                    let batch = m.rows / t_in;
                    let t_out = (t_in - kernel) / stride + 1;
                    let mut d = Mat::zeros(m.rows, c);
                    for b in 0..batch {
                        for t in 0..t_out {
                            let src = g.row(b * t_out + t);
                            for k in 0..*kernel {
                                let dst = d.row_mut(b * t_in + t * stride + k);
                                for (a, v) in dst.iter_mut().zip(&src[k * c..(k + 1) * c]) {
                                    *a += v;
                                }
                            }
                        }
                    }
                    send(&mut adj, *x, d);
                }
            }
        }
        Ok(grads)
    }
}
