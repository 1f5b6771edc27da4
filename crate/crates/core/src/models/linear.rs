use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::optim::Optimizer;
use super::{
    cross_entropy_grad, glorot, labels_of, local_propagate, rows_accuracy, seeded_rng,
    warn_if_single_class, FeatureScaling, NodeClassifier, TrainingConfig,
};
use crate::error::{Error, Result};
use crate::graph::{normalized_operator, SparseGraph, SplitSet};

/// Linear GCN without nonlinearities: `Z = softmax(Â^l X W)`.
///
/// `collapsed` caches `X W` (the per-node class weights consumed by the
/// attack and the defense) for the features of the training graph.
#[derive(Clone, Debug)]
pub struct LinearSurrogate {
    num_layers: usize,
    weight: Array2<f64>,
    collapsed: Array2<f64>,
    scaling: FeatureScaling,
    config: TrainingConfig,
    best_epoch: usize,
    validation_accuracy: f64,
}

impl LinearSurrogate {
    /// Rebuilds a surrogate from stored weights, recomputing `X W` on `g`.
    pub fn from_weights(
        weight: Array2<f64>,
        num_layers: usize,
        scaling: FeatureScaling,
        config: TrainingConfig,
        g: &SparseGraph,
    ) -> Result<Self> {
        if weight.nrows() != g.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "weight expects {} features, graph has {}",
                weight.nrows(),
                g.num_features()
            )));
        }
        let collapsed = scaling.apply(g.features()).dot(&weight);
        Ok(Self {
            num_layers,
            weight,
            collapsed,
            scaling,
            config,
            best_epoch: 0,
            validation_accuracy: f64::NAN,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Product of the layer weights, `F × C`.
    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    /// `X W`, one row of class weights per node, `N × C`.
    pub fn collapsed(&self) -> &Array2<f64> {
        &self.collapsed
    }

    /// The same model with `X W` replaced; used by invariance tests that
    /// rescale the class weights.
    pub fn with_collapsed(mut self, collapsed: Array2<f64>) -> Result<Self> {
        if collapsed.dim() != self.collapsed.dim() {
            return Err(Error::DimensionMismatch("collapsed weight shape".into()));
        }
        self.collapsed = collapsed;
        Ok(self)
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

    /// Validation accuracy of the selected epoch on the training graph.
    pub fn validation_accuracy(&self) -> f64 {
        self.validation_accuracy
    }

    fn check_width(&self, g: &SparseGraph) -> Result<()> {
        if g.num_features() != self.weight.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, graph has {}",
                self.weight.nrows(),
                g.num_features()
            )));
        }
        Ok(())
    }

    fn collapsed_row(&self, g: &SparseGraph, j: usize) -> Array1<f64> {
        self.scaling.apply_row(g.features().row(j)).dot(&self.weight)
    }
}

impl NodeClassifier for LinearSurrogate {
    fn num_features(&self) -> usize {
        self.weight.nrows()
    }

    fn num_classes(&self) -> usize {
        self.weight.ncols()
    }

    fn logits(&self, g: &SparseGraph) -> Result<Array2<f64>> {
        self.check_width(g)?;
        let xw = self.scaling.apply(g.features()).dot(&self.weight);
        normalized_operator(g).propagate(xw.view(), self.num_layers)
    }

    fn node_logits(&self, g: &SparseGraph, u: usize) -> Result<Array1<f64>> {
        self.check_width(g)?;
        g.check_node(u)?;
        Ok(local_propagate(g, u, self.num_layers, &mut |j| {
            self.collapsed_row(g, j)
        }))
    }

    fn input_projection(&self, g: &SparseGraph) -> Result<Array2<f64>> {
        self.check_width(g)?;
        Ok(self.scaling.apply(g.features()).dot(&self.weight))
    }

    fn node_logits_projected(
        &self,
        g: &SparseGraph,
        u: usize,
        projection: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>> {
        check_projection(g, projection, self.num_classes())?;
        g.check_node(u)?;
        Ok(local_propagate(g, u, self.num_layers, &mut |j| {
            projection.row(j).to_owned()
        }))
    }
}

pub(super) fn check_projection(g: &SparseGraph, projection: ArrayView2<'_, f64>, width: usize) -> Result<()> {
    if projection.dim() != (g.num_nodes(), width) {
        return Err(Error::DimensionMismatch(format!(
            "projection is {:?}, expected ({}, {width})",
            projection.dim(),
            g.num_nodes()
        )));
    }
    Ok(())
}

/// Training objective of the linear model: mean cross-entropy over the
/// training nodes plus `weight_decay / 2 · ‖W‖²`.
pub struct LinearObjective {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    weight_decay: f64,
}

impl LinearObjective {
    pub fn new(
        g: &SparseGraph,
        train: &[usize],
        num_layers: usize,
        scaling: FeatureScaling,
        weight_decay: f64,
    ) -> Result<Self> {
        let labels = labels_of(g, train)?;
        let x = scaling.apply(g.features());
        let propagated = normalized_operator(g).propagate(x.view(), num_layers)?;
        Ok(Self {
            inputs: propagated.select(Axis(0), train),
            labels,
            weight_decay,
        })
    }

    pub fn loss_and_gradient(&self, weight: &Array2<f64>) -> (f64, Array2<f64>) {
        let logits = self.inputs.dot(weight);
        let (ce, dlogits) = cross_entropy_grad(logits.view(), &self.labels);
        let loss = ce + 0.5 * self.weight_decay * weight.iter().map(|w| w * w).sum::<f64>();
        let mut grad = self.inputs.t().dot(&dlogits);
        grad.scaled_add(self.weight_decay, weight);
        (loss, grad)
    }

    pub fn loss(&self, weight: &Array2<f64>) -> f64 {
        self.loss_and_gradient(weight).0
    }
}

/// Fits `softmax(Â^l X W)` by full-batch descent on the training nodes and
/// keeps the weights with the best validation accuracy (earliest on ties).
pub fn train_linear_surrogate(
    g: &SparseGraph,
    splits: &SplitSet,
    cfg: &TrainingConfig,
) -> Result<LinearSurrogate> {
    if splits.train.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    splits.validate(g)?;
    if g.features().iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite features".into()));
    }
    let train_labels = labels_of(g, &splits.train)?;
    warn_if_single_class(&train_labels);
    let val_labels = labels_of(g, &splits.validation)?;

    let scaling = FeatureScaling::infer(g.features());
    let x = scaling.apply(g.features());
    let propagated = normalized_operator(g).propagate(x.view(), cfg.num_layers)?;
    let objective = LinearObjective {
        inputs: propagated.select(Axis(0), &splits.train),
        labels: train_labels.clone(),
        weight_decay: cfg.weight_decay,
    };
    let (select_inputs, select_labels) = if val_labels.is_empty() {
        (objective.inputs.clone(), train_labels)
    } else {
        (propagated.select(Axis(0), &splits.validation), val_labels)
    };

    let num_classes = g.num_classes();
    let mut rng = seeded_rng(cfg.seed);
    let mut weight = glorot(g.num_features(), num_classes, &mut rng);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &[&weight]);
    let mut best = (f64::NEG_INFINITY, 0, weight.clone());
    for epoch in 1..=cfg.epochs {
        let (_, grad) = objective.loss_and_gradient(&weight);
        optimizer.step(&mut [&mut weight], &[grad]);
        let acc = rows_accuracy(select_inputs.dot(&weight).view(), &select_labels);
        if acc > best.0 {
            best = (acc, epoch, weight.clone());
        }
    }
    if cfg.epochs == 0 {
        best.0 = rows_accuracy(select_inputs.dot(&weight).view(), &select_labels);
    }
    let (validation_accuracy, best_epoch, weight) = best;
    let collapsed = x.dot(&weight);
    Ok(LinearSurrogate {
        num_layers: cfg.num_layers,
        weight,
        collapsed,
        scaling,
        config: cfg.clone(),
        best_epoch,
        validation_accuracy,
    })
}
