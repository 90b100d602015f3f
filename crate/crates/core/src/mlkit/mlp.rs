use nalgebra::{DMatrix, DVector};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataBatch, LearnedFunction, MlError, Model, Scaling};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Per-timestep features built from the last `window` samples of each input.
    pub window: Option<usize>,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![32],
            optimizer: Optimizer::Sgd,
            epochs: 200,
            lr: 0.01,
            batch: 32,
            window: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Sequence mode: every row holds `steps` consecutive values per port, and
/// the network maps the last `len` values of each input port at one time step
/// to the outputs at that step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub len: usize,
    pub steps: usize,
}

/// Fully connected network: tanh hidden layers, linear output layer. Inputs
/// and targets are standardised internally.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub x_scale: Scaling,
    pub y_scale: Scaling,
    pub window: Option<Window>,
}

/// Gradient of the training loss, flattened in [`Mlp::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient(pub Vec<f64>);

/// `n × (c·T)` with port-major columns → `(n·T) × c`.
fn to_steps(x: &DataBatch, steps: usize) -> DataBatch {
    let c = x.width() / steps;
    let mut v = Vec::with_capacity(x.values().len());
    for row in x.rows() {
        for t in 0..steps {
            for ch in 0..c {
                v.push(row[ch * steps + t]);
            }
        }
    }
    DataBatch::new(x.n() * steps, c, v).expect("reshape keeps values")
}

fn from_steps(v: &DMatrix<f64>, steps: usize) -> Vec<f64> {
    let (rows, c) = v.shape();
    let n = rows / steps;
    let mut out = vec![0.0; rows * c];
    for i in 0..n {
        for t in 0..steps {
            for ch in 0..c {
                out[i * c * steps + ch * steps + t] = v[(i * steps + t, ch)];
            }
        }
    }
    out
}

impl Mlp {
    fn scaled(&self, x: &DataBatch, scale: &Scaling) -> DataBatch {
        let s = match self.window {
            Some(w) => to_steps(x, w.steps),
            None => x.clone(),
        };
        let mut v = s.values().to_vec();
        for row in v.chunks_mut(s.width().max(1)) {
            scale.forward_in_place(row);
        }
        DataBatch::new(s.n(), s.width(), v).expect("finite scaling")
    }

    fn features(&self, x: &DataBatch) -> DMatrix<f64> {
        let z = self.scaled(x, &self.x_scale);
        match self.window {
            None => z.to_matrix(),
            Some(Window { len, steps }) => {
                let c = z.width();
                let mut f = DMatrix::zeros(z.n(), c * len);
                for r in 0..z.n() {
                    let t = r % steps;
                    for ch in 0..c {
                        for lag in 0..len.min(t + 1) {
                            f[(r, ch * len + lag)] = z.get(r - lag, ch);
                        }
                    }
                }
                f
            }
        }
    }

    fn targets(&self, y: &DataBatch) -> DMatrix<f64> {
        self.scaled(y, &self.y_scale).to_matrix()
    }

    /// Activations of every layer; the first entry is the input.
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].clone() * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error over all samples and outputs, and its gradient.
    fn backward(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<Layer>) {
        let acts = self.forward(x);
        let out = acts.last().expect("at least one layer");
        let diff = out - y;
        let count = (diff.nrows() * diff.ncols()).max(1) as f64;
        let loss = diff.norm_squared() / count;
        let mut delta = diff * (2.0 / count);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = delta.transpose() * &acts[l];
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut next = &delta * &self.layers[l].w;
                next.zip_apply(&acts[l], |d, a| *d *= 1.0 - a * a);
                delta = next;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub(super) fn predict(&self, x: &DataBatch) -> Result<DataBatch, MlError> {
        let acts = self.forward(&self.features(x));
        let mut out = acts.last().expect("at least one layer").clone();
        for mut row in out.row_iter_mut() {
            let mut r: Vec<f64> = row.iter().copied().collect();
            self.y_scale.inverse_in_place(&mut r);
            row.iter_mut().zip(r).for_each(|(a, b)| *a = b);
        }
        let (width, values) = match self.window {
            Some(w) => (out.ncols() * w.steps, from_steps(&out, w.steps)),
            None => (out.ncols(), out.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()),
        };
        DataBatch::new(x.n(), width, values)
            .map_err(|_| MlError::BadArgument("network produced non-finite outputs".into()))
    }

    /// Weights then biases of each layer, row-major.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for l in &self.layers {
            p.extend(l.w.transpose().iter());
            p.extend(l.b.iter());
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let (r, c) = l.w.shape();
            l.w = DMatrix::from_row_slice(r, c, &p[at..at + r * c]);
            at += r * c;
            l.b = DVector::from_column_slice(&p[at..at + r]);
            at += r;
        }
    }

    /// Training loss on raw data (scaled internally) and its exact gradient.
    pub fn loss_gradient(&self, x: &DataBatch, y: &DataBatch) -> (f64, MlpGradient) {
        let (loss, grads) = self.backward(&self.features(x), &self.targets(y));
        let mut flat = Vec::new();
        for g in &grads {
            flat.extend(g.w.transpose().iter());
            flat.extend(g.b.iter());
        }
        (loss, MlpGradient(flat))
    }

    pub fn loss(&self, x: &DataBatch, y: &DataBatch) -> f64 {
        let acts = self.forward(&self.features(x));
        let diff = acts.last().expect("at least one layer") - self.targets(y);
        diff.norm_squared() / (diff.nrows() * diff.ncols()).max(1) as f64
    }
}

/// Train by mini-batch gradient descent; shuffling and initialisation are
/// driven by `config.seed` only.
pub fn mlp_fit(x_parts: &[&DataBatch], y_parts: &[&DataBatch], config: &MlpConfig) -> Result<LearnedFunction, MlError> {
    if config.hidden.contains(&0) {
        return Err(MlError::BadArgument("hidden layers must have at least one unit".into()));
    }
    if config.batch == 0 || config.epochs == 0 || !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(MlError::BadArgument("epochs, batch and lr must be positive".into()));
    }
    if config.window == Some(0) {
        return Err(MlError::BadArgument("window must be at least 1".into()));
    }
    let x = DataBatch::hcat(x_parts)?;
    let y = DataBatch::hcat(y_parts)?;
    if x.n() != y.n() {
        return Err(MlError::Shape(format!("{} inputs against {} targets", x.n(), y.n())));
    }
    if x.n() == 0 {
        return Err(MlError::Degenerate("no samples".into()));
    }

    let window = match config.window {
        None => None,
        Some(len) => {
            let steps = x_parts[0].width();
            if x_parts.iter().chain(y_parts).any(|p| p.width() != steps) || steps == 0 {
                return Err(MlError::BadArgument(
                    "window mode needs every port to carry sequences of the same length".into(),
                ));
            }
            Some(Window { len, steps })
        }
    };
    let (x_steps, y_steps) = match window {
        Some(w) => (to_steps(&x, w.steps), to_steps(&y, w.steps)),
        None => (x.clone(), y.clone()),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let feat_width = x_steps.width() * config.window.unwrap_or(1);
    let mut sizes = vec![feat_width];
    sizes.extend(&config.hidden);
    sizes.push(y_steps.width());
    let layers = sizes
        .windows(2)
        .map(|p| {
            let bound = 1.0 / (p[0].max(1) as f64).sqrt();
            Layer { w: DMatrix::from_fn(p[1], p[0], |_, _| rng.gen_range(-bound..=bound)), b: DVector::zeros(p[1]) }
        })
        .collect();
    let mut net =
        Mlp { layers, x_scale: Scaling::fit_lenient(&x_steps), y_scale: Scaling::fit_lenient(&y_steps), window };
    let feats = net.features(&x);
    let targets = net.targets(&y);
    let n = feats.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let zeros = |net: &Mlp| -> Vec<Layer> {
        net.layers.iter().map(|l| Layer { w: l.w.map(|_| 0.0), b: l.b.map(|_| 0.0) }).collect()
    };
    let (mut m1, mut m2) = (zeros(&net), zeros(&net));
    let mut step = 0i32;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch) {
            let xb = feats.select_rows(chunk.iter());
            let yb = targets.select_rows(chunk.iter());
            let (loss, grads) = net.backward(&xb, &yb);
            if !loss.is_finite() {
                return Err(MlError::Divergence { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
            for (l, g) in grads.iter().enumerate() {
                match config.optimizer {
                    Optimizer::Sgd => {
                        net.layers[l].w -= &g.w * config.lr;
                        net.layers[l].b -= &g.b * config.lr;
                    }
                    Optimizer::Adam => {
                        const B1: f64 = 0.9;
                        const B2: f64 = 0.999;
                        let c1 = 1.0 - B1.powi(step);
                        let c2 = 1.0 - B2.powi(step);
                        let lr = config.lr;
                        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                            *m = B1 * *m + (1.0 - B1) * g;
                            *v = B2 * *v + (1.0 - B2) * g * g;
                            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                        };
                        let layer = &mut net.layers[l];
                        for (((p, g), m), v) in
                            layer.w.iter_mut().zip(g.w.iter()).zip(m1[l].w.iter_mut()).zip(m2[l].w.iter_mut())
                        {
                            update(p, *g, m, v);
                        }
                        for (((p, g), m), v) in
                            layer.b.iter_mut().zip(g.b.iter()).zip(m1[l].b.iter_mut()).zip(m2[l].b.iter_mut())
                        {
                            update(p, *g, m, v);
                        }
                    }
                }
            }
        }
        if !epoch_loss.is_finite() || net.parameters().iter().any(|p| !p.is_finite()) {
            return Err(MlError::Divergence { epoch });
        }
    }
    let in_widths = x_parts.iter().map(|p| p.width()).collect();
    let out_widths = y_parts.iter().map(|p| p.width()).collect();
    Ok(LearnedFunction::new(Model::Mlp(net), in_widths, out_widths))
}
