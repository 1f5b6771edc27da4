use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::optim::Optimizer;
use super::{
    cross_entropy_grad, glorot, labels_of, local_propagate, rows_accuracy, seeded_rng,
    warn_if_single_class, FeatureScaling, NodeClassifier, TrainingConfig,
};
use crate::error::{Error, Result};
use crate::graph::{normalized_operator, NormalizedOperator, SparseGraph, SplitSet};

/// Two-layer GCN, `Z = softmax(Â · relu(Â X W0) · W1)`.
#[derive(Clone, Debug)]
pub struct GcnVictim {
    w0: Array2<f64>,
    w1: Array2<f64>,
    scaling: FeatureScaling,
    config: TrainingConfig,
    best_epoch: usize,
    validation_accuracy: f64,
}

impl GcnVictim {
    pub fn from_weights(
        w0: Array2<f64>,
        w1: Array2<f64>,
        scaling: FeatureScaling,
        config: TrainingConfig,
    ) -> Result<Self> {
        if w0.ncols() != w1.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "hidden widths disagree: {} vs {}",
                w0.ncols(),
                w1.nrows()
            )));
        }
        Ok(Self {
            w0,
            w1,
            scaling,
            config,
            best_epoch: 0,
            validation_accuracy: f64::NAN,
        })
    }

    pub fn w0(&self) -> &Array2<f64> {
        &self.w0
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn hidden(&self) -> usize {
        self.w0.ncols()
    }

    pub fn scaling(&self) -> FeatureScaling {
        self.scaling
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn validation_accuracy(&self) -> f64 {
        self.validation_accuracy
    }

    fn check_width(&self, g: &SparseGraph) -> Result<()> {
        if g.num_features() != self.w0.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, graph has {}",
                self.w0.nrows(),
                g.num_features()
            )));
        }
        Ok(())
    }
}

impl NodeClassifier for GcnVictim {
    fn num_features(&self) -> usize {
        self.w0.nrows()
    }

    fn num_classes(&self) -> usize {
        self.w1.ncols()
    }

    fn logits(&self, g: &SparseGraph) -> Result<Array2<f64>> {
        self.check_width(g)?;
        let op = normalized_operator(g);
        let xw = self.scaling.apply(g.features()).dot(&self.w0);
        let hidden = op.apply(xw.view())?.mapv_into(|v| v.max(0.0));
        Ok(op.apply(hidden.view())?.dot(&self.w1))
    }

    fn node_logits(&self, g: &SparseGraph, u: usize) -> Result<Array1<f64>> {
        self.check_width(g)?;
        g.check_node(u)?;
        let mut projected: HashMap<usize, Array1<f64>> = HashMap::new();
        let mut input = |j: usize| {
            projected
                .entry(j)
                .or_insert_with(|| self.scaling.apply_row(g.features().row(j)).dot(&self.w0))
                .clone()
        };
        let mut hidden = |k: usize| {
            local_propagate(g, k, 1, &mut input)
                .mapv_into(|v| v.max(0.0))
                .dot(&self.w1)
        };
        Ok(local_propagate(g, u, 1, &mut hidden))
    }

    fn input_projection(&self, g: &SparseGraph) -> Result<Array2<f64>> {
        self.check_width(g)?;
        Ok(self.scaling.apply(g.features()).dot(&self.w0))
    }

    fn node_logits_projected(
        &self,
        g: &SparseGraph,
        u: usize,
        projection: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>> {
        super::linear::check_projection(g, projection, self.hidden())?;
        g.check_node(u)?;
        let mut hidden = |k: usize| {
            local_propagate(g, k, 1, &mut |j| projection.row(j).to_owned())
                .mapv_into(|v| v.max(0.0))
                .dot(&self.w1)
        };
        Ok(local_propagate(g, u, 1, &mut hidden))
    }
}

/// Training objective of the GCN: mean cross-entropy over the training
/// nodes plus `weight_decay / 2 · (‖W0‖² + ‖W1‖²)`.
pub struct GcnObjective {
    op: NormalizedOperator,
    /// `Â X`, precomputed once.
    propagated: Array2<f64>,
    train: Vec<usize>,
    labels: Vec<usize>,
    weight_decay: f64,
}

/// Intermediate activations of one forward pass.
struct Forward {
    pre: Array2<f64>,
    smoothed: Array2<f64>,
}

impl GcnObjective {
    pub fn new(
        g: &SparseGraph,
        train: &[usize],
        scaling: FeatureScaling,
        weight_decay: f64,
    ) -> Result<Self> {
        let labels = labels_of(g, train)?;
        let op = normalized_operator(g);
        let propagated = op.apply(scaling.apply(g.features()).view())?;
        Ok(Self {
            op,
            propagated,
            train: train.to_vec(),
            labels,
            weight_decay,
        })
    }

    fn forward(&self, w0: &Array2<f64>) -> Forward {
        let pre = self.propagated.dot(w0);
        let hidden = pre.mapv(|v| v.max(0.0));
        let smoothed = self.op.apply(hidden.view()).expect("square operator");
        Forward { pre, smoothed }
    }

    fn loss_and_gradient_from(
        &self,
        fwd: &Forward,
        w0: &Array2<f64>,
        w1: &Array2<f64>,
    ) -> (f64, [Array2<f64>; 2]) {
        let smoothed_train = fwd.smoothed.select(Axis(0), &self.train);
        let logits = smoothed_train.dot(w1);
        let (ce, dlogits) = cross_entropy_grad(logits.view(), &self.labels);
        let decay = w0.iter().chain(w1.iter()).map(|w| w * w).sum::<f64>();
        let loss = ce + 0.5 * self.weight_decay * decay;

        let mut grad_w1 = smoothed_train.t().dot(&dlogits);
        grad_w1.scaled_add(self.weight_decay, w1);

        let mut d_smoothed = Array2::zeros(fwd.smoothed.raw_dim());
        let back = dlogits.dot(&w1.t());
        for (row, &u) in self.train.iter().enumerate() {
            let mut target = d_smoothed.row_mut(u);
            target += &back.row(row);
        }
        // Â is symmetric, so Âᵀ·d = Â·d
        let mut d_pre = self.op.apply(d_smoothed.view()).expect("square operator");
        ndarray::Zip::from(&mut d_pre)
            .and(&fwd.pre)
            .for_each(|d, &p| {
                if p <= 0.0 {
                    *d = 0.0
                }
            });
        let mut grad_w0 = self.propagated.t().dot(&d_pre);
        grad_w0.scaled_add(self.weight_decay, w0);
        (loss, [grad_w0, grad_w1])
    }

    pub fn loss_and_gradient(&self, w0: &Array2<f64>, w1: &Array2<f64>) -> (f64, [Array2<f64>; 2]) {
        let fwd = self.forward(w0);
        self.loss_and_gradient_from(&fwd, w0, w1)
    }

    pub fn loss(&self, w0: &Array2<f64>, w1: &Array2<f64>) -> f64 {
        self.loss_and_gradient(w0, w1).0
    }
}

/// Fits the two-layer GCN by full-batch descent with validation-based
/// model selection (earliest best epoch wins).
pub fn train_gcn_victim(g: &SparseGraph, splits: &SplitSet, cfg: &TrainingConfig) -> Result<GcnVictim> {
    if splits.train.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    if cfg.hidden == 0 {
        return Err(Error::Precondition("hidden width must be positive".into()));
    }
    splits.validate(g)?;
    if g.features().iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite features".into()));
    }
    let train_labels = labels_of(g, &splits.train)?;
    warn_if_single_class(&train_labels);
    let mut select_nodes = splits.validation.clone();
    if select_nodes.is_empty() {
        select_nodes = splits.train.clone();
    }
    let select_labels = labels_of(g, &select_nodes)?;

    let scaling = FeatureScaling::infer(g.features());
    let objective = GcnObjective::new(g, &splits.train, scaling, cfg.weight_decay)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut w0 = glorot(g.num_features(), cfg.hidden, &mut rng);
    let mut w1 = glorot(cfg.hidden, g.num_classes(), &mut rng);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &[&w0, &w1]);

    let select_accuracy = |fwd: &Forward, w1: &Array2<f64>| {
        let logits = fwd.smoothed.select(Axis(0), &select_nodes).dot(w1);
        rows_accuracy(logits.view(), &select_labels)
    };
    let mut best = (f64::NEG_INFINITY, 0, w0.clone(), w1.clone());
    for epoch in 0..=cfg.epochs {
        // evaluate the weights after `epoch` updates, then take a step
        let fwd = objective.forward(&w0);
        let acc = select_accuracy(&fwd, &w1);
        if acc > best.0 {
            best = (acc, epoch, w0.clone(), w1.clone());
        }
        if epoch == cfg.epochs {
            break;
        }
        let (_, grads) = objective.loss_and_gradient_from(&fwd, &w0, &w1);
        optimizer.step(&mut [&mut w0, &mut w1], &grads);
    }
    let (validation_accuracy, best_epoch, w0, w1) = best;
    if w0.iter().chain(w1.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Precondition("training diverged to non-finite weights".into()));
    }
    Ok(GcnVictim {
        w0,
        w1,
        scaling,
        config: cfg.clone(),
        best_epoch,
        validation_accuracy,
    })
}
