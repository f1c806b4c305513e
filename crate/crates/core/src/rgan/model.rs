use serde::{Deserialize, Serialize};

use super::GanConfig;
use crate::numeric::{
    derive_seed, BoundMlp, DiffGraph, Matrix, MlpParams, NodeId, OutputActivation, SeededRng,
    DEFAULT_LEAKY_SLOPE,
};
use crate::Result;

pub const HIDDEN: usize = 32;
pub const REGRESSOR_HIDDEN: usize = 8;

const INIT_TAG: u64 = 0x696e_6974;

/// Generator, critic and regressor networks.
///
/// The trunk maps `x` to a 32-wide hidden layer. The critic head scores
/// `[trunk(x), y]`; the regressor head predicts `y` from `trunk(x)` alone.
/// With an unshared trunk, `regressor_trunk` holds the regressor's own copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RganModel {
    pub generator: MlpParams,
    pub critic_trunk: MlpParams,
    pub regressor_trunk: Option<MlpParams>,
    pub critic_head: MlpParams,
    pub regressor_head: MlpParams,
}

impl RganModel {
    /// Each network is initialised from its own derived seed, so models that
    /// differ only in trunk sharing start from identical weights.
    pub fn new(feature_dim: usize, config: &GanConfig) -> Self {
        let rng = |i: u64| SeededRng::new(derive_seed(config.seed, INIT_TAG, i));
        let slope = DEFAULT_LEAKY_SLOPE;
        let generator = MlpParams::new(
            &[config.noise_dim, HIDDEN, HIDDEN, feature_dim + 1],
            OutputActivation::Sigmoid,
            slope,
            &mut rng(0),
        );
        let trunk = |r: &mut SeededRng| {
            MlpParams::new(&[feature_dim, HIDDEN], OutputActivation::LeakyRelu, slope, r)
        };
        let critic_trunk = trunk(&mut rng(1));
        let critic_head =
            MlpParams::new(&[HIDDEN + 1, HIDDEN, 1], OutputActivation::Identity, slope, &mut rng(2));
        let regressor_head = MlpParams::new(
            &[HIDDEN, REGRESSOR_HIDDEN, 1],
            OutputActivation::Identity,
            slope,
            &mut rng(3),
        );
        let regressor_trunk = (!config.share_trunk).then(|| trunk(&mut rng(4)));
        Self {
            generator,
            critic_trunk,
            regressor_trunk,
            critic_head,
            regressor_head,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.critic_trunk.in_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.in_dim()
    }

    pub fn shares_trunk(&self) -> bool {
        self.regressor_trunk.is_none()
    }

    fn regression_trunk(&self) -> &MlpParams {
        self.regressor_trunk.as_ref().unwrap_or(&self.critic_trunk)
    }

    /// Networks in checkpoint order: generator, critic trunk, regressor trunk
    /// (unshared only), critic head, regressor head.
    pub fn nets(&self) -> Vec<&MlpParams> {
        let mut v = vec![&self.generator, &self.critic_trunk];
        v.extend(self.regressor_trunk.as_ref());
        v.push(&self.critic_head);
        v.push(&self.regressor_head);
        v
    }

    pub fn nets_mut(&mut self) -> Vec<&mut MlpParams> {
        let mut v = vec![&mut self.generator, &mut self.critic_trunk];
        v.extend(self.regressor_trunk.as_mut());
        v.push(&mut self.critic_head);
        v.push(&mut self.regressor_head);
        v
    }

    /// Critic score per joint row `[x, y]`.
    pub fn critic(&self, joint: &Matrix) -> Result<Vec<f64>> {
        let d = self.feature_dim();
        let h = self.critic_trunk.forward(&joint.slice_cols(0, d))?;
        let c = h.concat_cols(&joint.slice_cols(d, d + 1))?;
        Ok(self.critic_head.forward(&c)?.into_vec())
    }

    /// Regressor prediction per feature row.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        let h = self.regression_trunk().forward(features)?;
        Ok(self.regressor_head.forward(&h)?.into_vec())
    }

    /// Joint rows `G(z)` in `[0, 1]^{d+1}`.
    pub fn generate_joint(&self, noise: &Matrix) -> Result<Matrix> {
        self.generator.forward(noise)
    }

    pub fn bind(&self, graph: &mut DiffGraph) -> BoundModel {
        BoundModel {
            generator: self.generator.bind(graph),
            critic_trunk: self.critic_trunk.bind(graph),
            regressor_trunk: self.regressor_trunk.as_ref().map(|t| t.bind(graph)),
            critic_head: self.critic_head.bind(graph),
            regressor_head: self.regressor_head.bind(graph),
            feature_dim: self.feature_dim(),
        }
    }
}

/// [`RganModel`] with every tensor registered in a graph.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub generator: BoundMlp,
    pub critic_trunk: BoundMlp,
    pub regressor_trunk: Option<BoundMlp>,
    pub critic_head: BoundMlp,
    pub regressor_head: BoundMlp,
    feature_dim: usize,
}

impl BoundModel {
    /// Same order as [`RganModel::nets`].
    pub fn nets(&self) -> Vec<&BoundMlp> {
        let mut v = vec![&self.generator, &self.critic_trunk];
        v.extend(self.regressor_trunk.as_ref());
        v.push(&self.critic_head);
        v.push(&self.regressor_head);
        v
    }

    /// `n×1` critic scores of a joint `n×(d+1)` node.
    pub fn critic(&self, g: &mut DiffGraph, joint: NodeId) -> Result<NodeId> {
        let d = self.feature_dim;
        let x = g.slice_cols(joint, 0, d)?;
        let y = g.slice_cols(joint, d, d + 1)?;
        let h = self.critic_trunk.forward(g, x)?;
        let c = g.concat_cols(h, y)?;
        self.critic_head.forward(g, c)
    }

    /// `n×1` regressor predictions of a joint node's feature columns.
    pub fn regress(&self, g: &mut DiffGraph, joint: NodeId) -> Result<NodeId> {
        let x = g.slice_cols(joint, 0, self.feature_dim)?;
        let trunk = self.regressor_trunk.as_ref().unwrap_or(&self.critic_trunk);
        let h = trunk.forward(g, x)?;
        self.regressor_head.forward(g, h)
    }

    /// Mean squared gap between the regressor and the label column.
    pub fn regression_mse(&self, g: &mut DiffGraph, joint: NodeId) -> Result<NodeId> {
        let d = self.feature_dim;
        let pred = self.regress(g, joint)?;
        let y = g.slice_cols(joint, d, d + 1)?;
        let r = g.sub(pred, y)?;
        let sq = g.square(r)?;
        g.mean(sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_dims() {
        let m = RganModel::new(3, &GanConfig::default());
        assert_eq!(m.generator.dims(), vec![8, 32, 32, 4]);
        assert_eq!(m.critic_trunk.dims(), vec![3, 32]);
        assert_eq!(m.critic_head.dims(), vec![33, 32, 1]);
        assert_eq!(m.regressor_head.dims(), vec![32, 8, 1]);
        assert!(m.shares_trunk());
        assert_eq!(m.nets().len(), 4);
    }

    #[test]
    fn unshared_trunk_is_independent() {
        let shared = RganModel::new(2, &GanConfig::default());
        let cfg = GanConfig { share_trunk: false, ..Default::default() };
        let split = RganModel::new(2, &cfg);
        let own = split.regressor_trunk.as_ref().unwrap();
        assert_ne!(own, &split.critic_trunk);
        assert_eq!(split.critic_trunk, shared.critic_trunk);
        assert_eq!(split.generator, shared.generator);
        assert_eq!(split.nets().len(), 5);
    }

    #[test]
    fn graph_and_plain_paths_agree() {
        let m = RganModel::new(2, &GanConfig::default());
        let mut rng = SeededRng::new(3);
        let joint = Matrix::from_vec(5, 3, (0..15).map(|_| rng.uniform()).collect()).unwrap();
        let mut g = DiffGraph::new();
        let b = m.bind(&mut g);
        let j = g.leaf(joint.clone());
        let c = b.critic(&mut g, j).unwrap();
        let r = b.regress(&mut g, j).unwrap();
        assert_eq!(g.value(c).as_slice(), m.critic(&joint).unwrap().as_slice());
        assert_eq!(g.value(r).as_slice(), m.predict(&joint.slice_cols(0, 2)).unwrap().as_slice());
    }
}
