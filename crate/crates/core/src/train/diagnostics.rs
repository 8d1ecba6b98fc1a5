use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{forward_impl, ActivationKind, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDeadCount {
    /// 0-based layer position in the network.
    pub layer: usize,
    pub width: usize,
    pub dead: usize,
    /// Indices of the dead units.
    pub units: Vec<usize>,
}

/// Hidden ReLU units whose output is 0 on every probe row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadNeuronReport {
    pub layers: Vec<LayerDeadCount>,
    pub total_dead: usize,
    pub total: usize,
    pub fraction: f64,
}

pub fn detect_dead_relu(net: &Network, probe: &Dataset) -> Result<DeadNeuronReport> {
    if probe.is_empty() {
        return Err(Error::EmptyDataset("dead-unit probe"));
    }
    let n = net.layers().len();
    let hidden: Vec<usize> = (0..n.saturating_sub(1))
        .filter(|&k| net.layers()[k].activation == ActivationKind::Relu)
        .collect();
    // alive[h][u] flips once unit u of hidden layer h fires.
    let mut alive: Vec<Vec<bool>> = hidden.iter().map(|&k| vec![false; net.layers()[k].width()]).collect();
    for row in probe.rows() {
        let trace = forward_impl(net, &row.features, None)?;
        for (flags, &k) in alive.iter_mut().zip(&hidden) {
            for (f, &y) in flags.iter_mut().zip(trace.post[k].iter()) {
                *f |= y != 0.0;
            }
        }
    }
    let layers: Vec<LayerDeadCount> = hidden
        .iter()
        .zip(&alive)
        .map(|(&k, flags)| {
            let units: Vec<usize> = flags.iter().enumerate().filter(|(_, a)| !**a).map(|(u, _)| u).collect();
            LayerDeadCount {
                layer: k,
                width: flags.len(),
                dead: units.len(),
                units,
            }
        })
        .collect();
    let total_dead = layers.iter().map(|l| l.dead).sum();
    let total = layers.iter().map(|l| l.width).sum();
    Ok(DeadNeuronReport {
        layers,
        total_dead,
        total,
        fraction: if total == 0 { 0.0 } else { total_dead as f64 / total as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureColumn, LabelColumn, Row, SchemaSpec};
    use crate::linalg::{Matrix, Vector};
    use crate::nn::{init_weights, Architecture, DenseLayer, InitScheme};
    use rand::{Rng, SeedableRng};

    fn probe(features: usize, n: usize, seed: u64) -> Dataset {
        let schema = SchemaSpec::new(
            (0..features).map(|i| FeatureColumn::custom(&format!("X{i}"), 1.0)).collect(),
            vec![LabelColumn { code: "A".into() }, LabelColumn { code: "B".into() }],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| Row {
                features: Vector::from((0..features).map(|_| rng.random::<f64>()).collect::<Vec<_>>()),
                label: 0,
            })
            .collect();
        Dataset::new(schema, rows).unwrap()
    }

    fn net_with_hidden(weight: f64, bias: f64) -> Network {
        let hidden = DenseLayer::new(
            Matrix::new(3, 2, vec![weight; 6]).unwrap(),
            Vector::filled(3, bias),
            ActivationKind::Relu,
            0.0,
        )
        .unwrap();
        let head = DenseLayer::new(Matrix::zeros(2, 3), Vector::zeros(2), ActivationKind::Softmax, 0.0).unwrap();
        Network::new(2, vec![hidden, head], true, 0).unwrap()
    }

    #[test]
    fn negative_layer_is_all_dead() {
        let r = detect_dead_relu(&net_with_hidden(-1.0, -1.0), &probe(2, 50, 1)).unwrap();
        assert_eq!(r.total_dead, 3);
        assert_eq!(r.total, 3);
        assert_eq!(r.fraction, 1.0);
        assert_eq!(r.layers[0].units, vec![0, 1, 2]);
    }

    #[test]
    fn positive_bias_layer_has_none_dead() {
        for w in [0.0, 0.5, 5.0] {
            let r = detect_dead_relu(&net_with_hidden(w, 1.0), &probe(2, 20, 2)).unwrap();
            assert_eq!(r.total_dead, 0, "w={w}");
        }
        assert!(matches!(
            detect_dead_relu(&net_with_hidden(1.0, 1.0), &probe(2, 0, 0)),
            Err(Error::EmptyDataset(_))
        ));
    }

    /// Exhaustive oracle: recompute every unit's activation per row by hand.
    fn brute_force(net: &Network, ds: &Dataset) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut inputs: Vec<Vec<f64>> = ds.rows().iter().map(|r| r.features.to_vec()).collect();
        for (k, layer) in net.layers().iter().enumerate() {
            let mut next = Vec::new();
            let mut dead = Vec::new();
            for u in 0..layer.width() {
                let mut fired = false;
                for (ri, x) in inputs.iter().enumerate() {
                    let s: f64 = (0..layer.fan_in()).map(|j| layer.weights.get(u, j) * x[j]).sum::<f64>() + layer.bias[u];
                    let y = s.max(0.0);
                    fired |= y != 0.0;
                    if next.len() <= ri {
                        next.push(Vec::new());
                    }
                    next[ri].push(y);
                }
                if !fired {
                    dead.push(u);
                }
            }
            if k + 1 < net.layers().len() {
                out.push(dead);
            }
            inputs = next;
        }
        out
    }

    #[test]
    fn agrees_with_per_neuron_scan() {
        for seed in 0..10 {
            let arch = Architecture::relu_softmax(4, &[12, 9], 2);
            let mut net = init_weights(&arch, InitScheme::He, seed).unwrap();
            // Push some biases down so a fair share of units die.
            for layer in net.layers_mut() {
                for (i, b) in layer.bias.iter_mut().enumerate() {
                    *b = -(i as f64 % 4.0) * 0.6;
                }
            }
            let ds = probe(4, 40, seed + 100);
            let r = detect_dead_relu(&net, &ds).unwrap();
            let oracle = brute_force(&net, &ds);
            assert_eq!(r.layers.len(), 2);
            for (l, dead) in r.layers.iter().zip(&oracle) {
                assert_eq!(&l.units, dead, "seed {seed}");
                assert!(l.dead <= l.width);
            }
        }
    }
}
