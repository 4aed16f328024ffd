//! Model expansion: embed a trained small network inside a wider (and
//! possibly deeper) randomly-initialized one, and derive the freeze mask
//! that marks the embedded block.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{init_network, Network, NetworkSpec};

/// How non-embedded entries of aligned layers are filled.
///
/// `Random` keeps the fresh Glorot initialization (the experiment
/// setting); `Zero` zeroes them so the big network's logits on mapped
/// classes reproduce the small network exactly, which makes function
/// preservation testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NewWeightMode {
    #[default]
    Random,
    Zero,
}

/// Widening/deepening recipe from a small architecture to a large one.
///
/// `target_sizes` may be longer than `source_sizes`; the extra entries
/// are new layers inserted immediately before the head. Aligned entries
/// (every source size except the head, plus head to head) must not
/// shrink. `class_map[i]` is the target class index for source class
/// `i`; it defaults to the identity into the low indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub source_sizes: Vec<usize>,
    pub target_sizes: Vec<usize>,
    #[serde(default)]
    pub class_map: Option<Vec<usize>>,
    #[serde(default)]
    pub new_weight_mode: NewWeightMode,
}

impl ExpansionPlan {
    pub fn new(source_sizes: Vec<usize>, target_sizes: Vec<usize>) -> ExpansionPlan {
        ExpansionPlan {
            source_sizes,
            target_sizes,
            class_map: None,
            new_weight_mode: NewWeightMode::Random,
        }
    }

    pub fn appended_layers(&self) -> usize {
        self.target_sizes.len() - self.source_sizes.len()
    }

    /// Effective class map (identity into low indices by default).
    pub fn effective_class_map(&self) -> Vec<usize> {
        let source_classes = *self.source_sizes.last().unwrap();
        self.class_map
            .clone()
            .unwrap_or_else(|| (0..source_classes).collect())
    }

    pub fn validate(&self) -> Result<()> {
        NetworkSpec::new(self.source_sizes.clone())
            .map_err(|e| Error::InvalidPlan(format!("source: {e}")))?;
        NetworkSpec::new(self.target_sizes.clone())
            .map_err(|e| Error::InvalidPlan(format!("target: {e}")))?;
        let (src, tgt) = (&self.source_sizes, &self.target_sizes);
        if tgt.len() < src.len() {
            return Err(Error::InvalidPlan(format!(
                "target depth {} < source depth {}",
                tgt.len(),
                src.len()
            )));
        }
        if src[0] != tgt[0] {
            return Err(Error::InvalidPlan(format!(
                "input dims differ: {} vs {}",
                src[0], tgt[0]
            )));
        }
        for i in 1..src.len() - 1 {
            if tgt[i] < src[i] {
                return Err(Error::InvalidPlan(format!(
                    "layer {i} shrinks from {} to {}",
                    src[i], tgt[i]
                )));
            }
        }
        // the head embeds its input columns into whatever feeds the target head
        let head_in = tgt[tgt.len() - 2];
        if head_in < src[src.len() - 2] {
            return Err(Error::InvalidPlan(format!(
                "target head input {head_in} < source head input {}",
                src[src.len() - 2]
            )));
        }
        let map = self.effective_class_map();
        let source_classes = *src.last().unwrap();
        let target_classes = *tgt.last().unwrap();
        if map.len() != source_classes {
            return Err(Error::InvalidPlan(format!(
                "class map has {} entries for {source_classes} source classes",
                map.len()
            )));
        }
        let mut seen = vec![false; target_classes];
        for &t in &map {
            if t >= target_classes {
                return Err(Error::InvalidPlan(format!(
                    "class map target {t} out of range for {target_classes} classes"
                )));
            }
            if seen[t] {
                return Err(Error::InvalidPlan(format!("class map target {t} repeated")));
            }
            seen[t] = true;
        }
        Ok(())
    }
}

/// Per-parameter frozen flags, shape-congruent with a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    layers: Vec<(Array2<bool>, Array1<bool>)>,
}

impl FreezeMask {
    pub fn from_layers(layers: Vec<(Array2<bool>, Array1<bool>)>) -> FreezeMask {
        FreezeMask { layers }
    }

    /// All-false mask for a plain (non-expanded) run.
    pub fn empty(spec: &NetworkSpec) -> FreezeMask {
        FreezeMask {
            layers: spec
                .layer_sizes()
                .windows(2)
                .map(|p| {
                    (
                        Array2::from_elem((p[1], p[0]), false),
                        Array1::from_elem(p[1], false),
                    )
                })
                .collect(),
        }
    }

    pub fn full(spec: &NetworkSpec) -> FreezeMask {
        let mut m = FreezeMask::empty(spec);
        for (w, b) in &mut m.layers {
            w.fill(true);
            b.fill(true);
        }
        m
    }

    pub fn layers(&self) -> &[(Array2<bool>, Array1<bool>)] {
        &self.layers
    }

    pub fn frozen_count(&self) -> usize {
        self.layers
            .iter()
            .map(|(w, b)| {
                w.iter().filter(|&&f| f).count() + b.iter().filter(|&&f| f).count()
            })
            .sum()
    }

    pub fn entry_count(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Elementwise negation: train only what was frozen, and vice versa.
    pub fn invert(&self) -> FreezeMask {
        FreezeMask {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (w.mapv(|f| !f), b.mapv(|f| !f)))
                .collect(),
        }
    }

    pub fn check_congruent(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.layers().len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} layers, network has {}",
                self.layers.len(),
                net.layers().len()
            )));
        }
        for (l, ((mw, mb), layer)) in self.layers.iter().zip(net.layers()).enumerate() {
            if mw.dim() != layer.weights.dim() || mb.len() != layer.bias.len() {
                return Err(Error::ShapeMismatch(format!(
                    "mask layer {l} shape {:?}/{} vs network {:?}/{}",
                    mw.dim(),
                    mb.len(),
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }
}

/// Embed `small` into a fresh large network per `plan`.
///
/// The large network is initialized from `seed`; aligned layers then get
/// their top-left source-shaped block (head rows routed through the
/// class map) overwritten with the small model's parameters. The
/// returned mask is true exactly on the overwritten entries.
pub fn expand_network(
    small: &Network,
    plan: &ExpansionPlan,
    seed: u64,
) -> Result<(Network, FreezeMask)> {
    plan.validate()?;
    if small.spec().layer_sizes() != plan.source_sizes.as_slice() {
        return Err(Error::InvalidPlan(format!(
            "network is {:?} but plan expects source {:?}",
            small.spec().layer_sizes(),
            plan.source_sizes
        )));
    }
    let target_spec = NetworkSpec::new(plan.target_sizes.clone())?;
    let mut big = init_network(&target_spec, seed);
    let mut mask = FreezeMask::empty(&target_spec);

    let src_depth = plan.source_sizes.len() - 1;
    let tgt_depth = plan.target_sizes.len() - 1;
    let zero = plan.new_weight_mode == NewWeightMode::Zero;

    // hidden layers align by index from the input
    for l in 0..src_depth - 1 {
        let small_layer = &small.layers()[l];
        let (s_out, s_in) = small_layer.weights.dim();
        let layer = &mut big.layers_mut()[l];
        if zero {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        layer
            .weights
            .slice_mut(s![..s_out, ..s_in])
            .assign(&small_layer.weights);
        layer.bias.slice_mut(s![..s_out]).assign(&small_layer.bias);
        let (mw, mb) = &mut mask.layers[l];
        mw.slice_mut(s![..s_out, ..s_in]).fill(true);
        mb.slice_mut(s![..s_out]).fill(true);
    }

    // head aligns to head; rows route through the class map
    let class_map = plan.effective_class_map();
    let small_head = &small.layers()[src_depth - 1];
    let s_in = small_head.input_dim();
    let head = tgt_depth - 1;
    {
        let layer = &mut big.layers_mut()[head];
        if zero {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        let (mw, mb) = &mut mask.layers[head];
        for (c_src, &c_tgt) in class_map.iter().enumerate() {
            layer
                .weights
                .slice_mut(s![c_tgt, ..s_in])
                .assign(&small_head.weights.slice(s![c_src, ..]));
            layer.bias[c_tgt] = small_head.bias[c_src];
            mw.slice_mut(s![c_tgt, ..s_in]).fill(true);
            mb[c_tgt] = true;
        }
    }
    Ok((big, mask))
}

/// Per-layer embedded vs new parameter counts for a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub layers: Vec<LayerCoverage>,
    pub total_frozen: usize,
    pub total_new: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCoverage {
    /// Weight-layer index in the target network.
    pub layer: usize,
    pub frozen_weights: usize,
    pub frozen_biases: usize,
    pub new_weights: usize,
    pub new_biases: usize,
    /// True for layers inserted by the expansion (no embedded block).
    pub appended: bool,
}

pub fn coverage_report(plan: &ExpansionPlan) -> Result<CoverageReport> {
    plan.validate()?;
    let src = &plan.source_sizes;
    let tgt = &plan.target_sizes;
    let src_depth = src.len() - 1;
    let tgt_depth = tgt.len() - 1;
    let mut layers = Vec::with_capacity(tgt_depth);
    for l in 0..tgt_depth {
        let total_w = tgt[l + 1] * tgt[l];
        let total_b = tgt[l + 1];
        let (frozen_w, frozen_b, appended) = if l < src_depth - 1 {
            (src[l + 1] * src[l], src[l + 1], false)
        } else if l == tgt_depth - 1 {
            let classes = *src.last().unwrap();
            (classes * src[src.len() - 2], classes, false)
        } else {
            (0, 0, true)
        };
        layers.push(LayerCoverage {
            layer: l,
            frozen_weights: frozen_w,
            frozen_biases: frozen_b,
            new_weights: total_w - frozen_w,
            new_biases: total_b - frozen_b,
            appended,
        });
    }
    let total_frozen = layers.iter().map(|c| c.frozen_weights + c.frozen_biases).sum();
    let total_new = layers.iter().map(|c| c.new_weights + c.new_biases).sum();
    Ok(CoverageReport {
        layers,
        total_frozen,
        total_new,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{forward, init_network};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_net(sizes: &[usize], seed: u64) -> Network {
        init_network(&NetworkSpec::new(sizes.to_vec()).unwrap(), seed)
    }

    #[test]
    fn paper_sizes_embed_bitwise() {
        let small = small_net(&[784, 150, 80, 5], 3);
        let plan = ExpansionPlan::new(vec![784, 150, 80, 5], vec![784, 256, 128, 10]);
        let (big, mask) = expand_network(&small, &plan, 99).unwrap();
        assert_eq!(
            big.layers()[0].weights.slice(s![..150, ..784]),
            small.layers()[0].weights
        );
        assert_eq!(
            big.layers()[1].weights.slice(s![..80, ..150]),
            small.layers()[1].weights
        );
        assert_eq!(
            big.layers()[2].weights.slice(s![..5, ..80]),
            small.layers()[2].weights
        );
        // frozen entries all equal the corresponding small entries
        for (l, ((mw, mb), layer)) in mask.layers().iter().zip(big.layers()).enumerate() {
            let frozen_w = mw.iter().filter(|&&f| f).count();
            let expected = small.layers()[l].weights.len();
            assert_eq!(frozen_w, expected);
            for (i, &frozen) in mb.iter().enumerate() {
                if frozen {
                    assert_eq!(layer.bias[i], small.layers()[l].bias[i]);
                }
            }
        }
    }

    #[test]
    fn identity_plan_reproduces_small_with_full_mask() {
        let small = small_net(&[12, 7, 4], 1);
        let plan = ExpansionPlan::new(vec![12, 7, 4], vec![12, 7, 4]);
        let (big, mask) = expand_network(&small, &plan, 123).unwrap();
        assert_eq!(big, small);
        assert_eq!(mask.frozen_count(), mask.entry_count());
    }

    #[test]
    fn zero_mode_preserves_logits_on_mapped_classes() {
        let small = small_net(&[10, 6, 4, 3], 17);
        let mut plan = ExpansionPlan::new(vec![10, 6, 4, 3], vec![10, 12, 9, 7]);
        plan.new_weight_mode = NewWeightMode::Zero;
        plan.class_map = Some(vec![1, 4, 6]);
        let (big, _) = expand_network(&small, &plan, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = Array2::from_shape_fn((100, 10), |_| rng.gen::<f64>());
        let (small_logits, _) = forward(&small, &batch).unwrap();
        let (big_logits, _) = forward(&big, &batch).unwrap();
        for row in 0..100 {
            for (c_src, &c_tgt) in [1usize, 4, 6].iter().enumerate() {
                let diff = (big_logits[[row, c_tgt]] - small_logits[[row, c_src]]).abs();
                assert!(diff <= 1e-12, "row {row} class {c_src}: diff {diff}");
            }
            for c in [0usize, 2, 3, 5] {
                assert_eq!(big_logits[[row, c]], 0.0);
            }
        }
    }

    #[test]
    fn invert_mask_roundtrip_and_counts() {
        let spec = NetworkSpec::new(vec![5, 4, 3]).unwrap();
        let full = FreezeMask::full(&spec);
        let inv = full.invert();
        assert_eq!(inv.frozen_count(), 0);
        assert_eq!(inv.invert(), full);
        let small = small_net(&[5, 3, 2], 0);
        let plan = ExpansionPlan::new(vec![5, 3, 2], vec![5, 4, 3]);
        let (_, mask) = expand_network(&small, &plan, 1).unwrap();
        assert_eq!(
            mask.frozen_count() + mask.invert().frozen_count(),
            mask.entry_count()
        );
    }

    #[test]
    fn coverage_matches_paper_layer_arithmetic() {
        let plan = ExpansionPlan::new(vec![784, 150, 80, 5], vec![784, 256, 128, 10]);
        let report = coverage_report(&plan).unwrap();
        assert_eq!(report.layers[0].frozen_weights, 150 * 784);
        assert_eq!(report.layers[1].frozen_weights, 80 * 150);
        assert_eq!(report.layers[2].frozen_weights, 5 * 80);
        let total_params: usize = [256 * 784 + 256, 128 * 256 + 128, 10 * 128 + 10]
            .iter()
            .sum();
        assert_eq!(report.total_frozen + report.total_new, total_params);
    }

    #[test]
    fn identity_plan_coverage_is_all_frozen() {
        let plan = ExpansionPlan::new(vec![8, 6, 3], vec![8, 6, 3]);
        let report = coverage_report(&plan).unwrap();
        assert_eq!(report.total_new, 0);
        assert_eq!(report.total_frozen, 6 * 8 + 6 + 3 * 6 + 3);
    }

    #[test]
    fn appended_layer_is_all_new() {
        let plan = ExpansionPlan::new(vec![8, 6, 3], vec![8, 6, 64, 3]);
        let report = coverage_report(&plan).unwrap();
        assert!(report.layers[1].appended);
        assert_eq!(report.layers[1].frozen_weights, 0);
        assert_eq!(report.layers[1].new_weights, 64 * 6);
        // head still embeds through its low input columns
        assert_eq!(report.layers[2].frozen_weights, 3 * 6);
    }

    #[test]
    fn appended_layer_expansion_builds_and_embeds_hiddens() {
        let small = small_net(&[8, 6, 3], 2);
        let plan = ExpansionPlan::new(vec![8, 6, 3], vec![8, 10, 64, 3]);
        let (big, mask) = expand_network(&small, &plan, 7).unwrap();
        assert_eq!(big.spec().layer_sizes(), &[8, 10, 64, 3]);
        assert_eq!(
            big.layers()[0].weights.slice(s![..6, ..8]),
            small.layers()[0].weights
        );
        let (mw, _) = &mask.layers()[1];
        assert!(mw.iter().all(|&f| !f));
    }

    #[test]
    fn shrinking_plan_is_rejected() {
        let plan = ExpansionPlan::new(vec![8, 6, 3], vec![8, 5, 3]);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn non_injective_class_map_is_rejected() {
        let mut plan = ExpansionPlan::new(vec![8, 6, 3], vec![8, 6, 5]);
        plan.class_map = Some(vec![0, 1, 1]);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn plan_source_mismatch_is_rejected() {
        let small = small_net(&[8, 6, 3], 2);
        let plan = ExpansionPlan::new(vec![8, 7, 3], vec![8, 9, 4]);
        assert!(expand_network(&small, &plan, 0).is_err());
    }
}
