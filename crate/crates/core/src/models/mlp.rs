use crate::autodiff::{kernels, NoiseSource, Parameter, Result, Tape, Tensor, Var};

/// A stack of affine layers with relu between them (none after the last).
/// Weights live in an external parameter list; the layout records where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    pub name: String,
    pub sizes: Vec<usize>,
    /// Index of the first weight in the parameter list.
    pub offset: usize,
}

impl MlpLayout {
    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    /// Parameters held: a weight and a bias per layer.
    pub fn param_count(&self) -> usize {
        2 * self.layers()
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.name)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.name)
    }

    /// Append freshly initialised parameters: weights and biases drawn from
    /// `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init(
        name: &str,
        sizes: &[usize],
        params: &mut Vec<Parameter>,
        src: &mut NoiseSource,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let layout = Self {
            name: name.to_string(),
            sizes: sizes.to_vec(),
            offset: params.len(),
        };
        for (l, pair) in sizes.windows(2).enumerate() {
            let (inp, out) = (pair[0], pair[1]);
            let bound = 1.0 / (inp as f64).sqrt();
            let w = (0..inp * out).map(|_| src.uniform(-bound, bound)).collect();
            let b = (0..out).map(|_| src.uniform(-bound, bound)).collect();
            params.push(Parameter::new(
                layout.weight_name(l),
                Tensor::matrix(inp, out, w).expect("weight shape"),
            ));
            params.push(Parameter::new(
                layout.bias_name(l),
                Tensor::new(vec![out], b).expect("bias shape"),
            ));
        }
        layout
    }

    /// Record the forward pass; `vars` are the parameter handles in list order.
    pub fn record(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for l in 0..self.layers() {
            let w = vars[self.offset + 2 * l];
            let b = vars[self.offset + 2 * l + 1];
            h = tape.affine(h, w, b)?;
            if l + 1 < self.layers() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without a tape.
    pub fn infer(&self, params: &[Parameter], x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in 0..self.layers() {
            let w = &params[self.offset + 2 * l].value;
            let b = &params[self.offset + 2 * l + 1].value;
            h = kernels::affine(&h, w, b)?;
            if l + 1 < self.layers() {
                h = kernels::relu(&h);
            }
        }
        Ok(h)
    }
}
