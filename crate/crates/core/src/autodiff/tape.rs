use super::kernels;
use super::{DiffError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Columns {
        x: Var,
        start: usize,
    },
    Rows {
        x: Var,
        start: usize,
    },
    Reparameterize {
        mu: Var,
        logvar: Var,
        noise: Tensor,
    },
    Kl {
        mu: Var,
        logvar: Var,
    },
    Mse {
        a: Var,
        b: Var,
    },
    Add(Var, Var),
    Scale(Var, f64),
    SelectMatvec {
        mats: Var,
        actions: Vec<usize>,
        z: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for one reverse pass.
///
/// Nodes are appended in evaluation order, so walking the node list backwards
/// is a reverse topological traversal.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (a parameter).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A non-differentiable input (data, targets).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = kernels::affine(self.value(x), self.value(w), self.value(b))?;
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(y, Op::Affine { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = kernels::relu(self.value(x));
        let rg = self.needs(x);
        self.push(y, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = kernels::sigmoid(self.value(x));
        let rg = self.needs(x);
        self.push(y, Op::Sigmoid(x), rg)
    }

    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let y = kernels::columns(self.value(x), start, len)?;
        let rg = self.needs(x);
        Ok(self.push(y, Op::Columns { x, start }, rg))
    }

    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let y = kernels::rows(self.value(x), start, len)?;
        let rg = self.needs(x);
        Ok(self.push(y, Op::Rows { x, start }, rg))
    }

    pub fn reparameterize(&mut self, mu: Var, logvar: Var, noise: Tensor) -> Result<Var> {
        let z = kernels::reparameterize(self.value(mu), self.value(logvar), &noise)?;
        let rg = self.needs(mu) || self.needs(logvar);
        Ok(self.push(z, Op::Reparameterize { mu, logvar, noise }, rg))
    }

    pub fn kl_to_standard_normal(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let kl = kernels::kl_to_standard_normal(self.value(mu), self.value(logvar))?;
        let rg = self.needs(mu) || self.needs(logvar);
        Ok(self.push(Tensor::scalar(kl), Op::Kl { mu, logvar }, rg))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::mse(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(v), Op::Mse { a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        kernels::same_shape("add", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let y = Tensor::new(self.value(a).shape().to_vec(), data)?.check_finite("add")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| x * factor).collect();
        let y = Tensor::new(self.value(a).shape().to_vec(), data)?.check_finite("scale")?;
        let rg = self.needs(a);
        Ok(self.push(y, Op::Scale(a, factor), rg))
    }

    /// Row `i` of the result is `mats[actions[i]] * z[i]`.
    pub fn select_matvec(&mut self, mats: Var, actions: &[usize], z: Var) -> Result<Var> {
        let y = kernels::select_matvec(self.value(mats), actions, self.value(z))?;
        let rg = self.needs(mats) || self.needs(z);
        Ok(self.push(
            y,
            Op::SelectMatvec {
                mats,
                actions: actions.to_vec(),
                z,
            },
            rg,
        ))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(DiffError::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be a scalar, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            let mut acc = |v: Var, t: Tensor| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!("leaves are handled above"),
                Op::Affine { x, w, b } => {
                    let (dx, dw, db) = kernels::affine_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        self.needs(*x),
                    );
                    if let Some(dx) = dx {
                        acc(*x, dx);
                    }
                    acc(*w, dw);
                    acc(*b, db);
                }
                Op::Relu(x) => {
                    let data = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    acc(*x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Sigmoid(x) => {
                    let data = node
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &gv)| gv * y * (1.0 - y))
                        .collect();
                    acc(*x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Columns { x, start } => {
                    let (rows, cols) = self.value(*x).dims2("columns")?;
                    let len = g.shape()[1];
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        dx[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                    }
                    acc(*x, Tensor::matrix(rows, cols, dx)?);
                }
                Op::Rows { x, start } => {
                    let (rows, cols) = self.value(*x).dims2("rows")?;
                    let mut dx = vec![0.0; rows * cols];
                    dx[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    acc(*x, Tensor::matrix(rows, cols, dx)?);
                }
                Op::Reparameterize { mu, logvar, noise } => {
                    acc(*mu, g.clone());
                    let data = self
                        .value(*logvar)
                        .data()
                        .iter()
                        .zip(noise.data())
                        .zip(g.data())
                        .map(|((lv, e), gv)| gv * e * 0.5 * (0.5 * lv).exp())
                        .collect();
                    acc(*logvar, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Kl { mu, logvar } => {
                    let gs = g.item();
                    let m = self.value(*mu);
                    let batch = m.shape()[0] as f64;
                    let dmu = m.data().iter().map(|v| gs * v / batch).collect();
                    let dlv = self
                        .value(*logvar)
                        .data()
                        .iter()
                        .map(|lv| gs * 0.5 * (lv.exp() - 1.0) / batch)
                        .collect();
                    acc(*mu, Tensor::new(m.shape().to_vec(), dmu)?);
                    acc(*logvar, Tensor::new(m.shape().to_vec(), dlv)?);
                }
                Op::Mse { a, b } => {
                    let gs = g.item();
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let n = va.len() as f64;
                    let da: Vec<f64> = va
                        .data()
                        .iter()
                        .zip(vb.data())
                        .map(|(x, y)| gs * 2.0 * (x - y) / n)
                        .collect();
                    if self.needs(*b) {
                        let db = da.iter().map(|v| -v).collect();
                        acc(*b, Tensor::new(vb.shape().to_vec(), db)?);
                    }
                    acc(*a, Tensor::new(va.shape().to_vec(), da)?);
                }
                Op::Add(a, b) => {
                    acc(*b, g.clone());
                    acc(*a, g);
                }
                Op::Scale(a, factor) => {
                    let data = g.data().iter().map(|v| v * factor).collect();
                    acc(*a, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::SelectMatvec { mats, actions, z } => {
                    let mv = self.value(*mats);
                    let zv = self.value(*z);
                    let d = zv.shape()[1];
                    let m = mv.data();
                    if self.needs(*z) {
                        let mut dz = vec![0.0; zv.len()];
                        for (i, &a) in actions.iter().enumerate() {
                            let block = &m[a * d * d..(a + 1) * d * d];
                            let gi = g.row(i);
                            for r in 0..d {
                                for c in 0..d {
                                    dz[i * d + c] += block[r * d + c] * gi[r];
                                }
                            }
                        }
                        acc(*z, Tensor::new(zv.shape().to_vec(), dz)?);
                    }
                    if self.needs(*mats) {
                        let mut dm = vec![0.0; mv.len()];
                        for (i, &a) in actions.iter().enumerate() {
                            let gi = g.row(i);
                            let zi = zv.row(i);
                            for r in 0..d {
                                for c in 0..d {
                                    dm[a * d * d + r * d + c] += gi[r] * zi[c];
                                }
                            }
                        }
                        acc(*mats, Tensor::new(mv.shape().to_vec(), dm)?);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
