//! Property-based checks over the numeric core and the replay buffer.

use proptest::prelude::*;

use cfrl_core::agents::{Provenance, ReplayBuffer, Transition};
use cfrl_core::numkit::{soft_update, Activation, MlpParams, Rng, Vector};

fn transition(tag: u64) -> Transition {
    Transition {
        state: Vector(vec![tag as f64]),
        action: Vector(vec![0.0]),
        reward: tag as f64,
        next_state: Vector(vec![0.0]),
        done: false,
        provenance: if tag.is_multiple_of(2) { Provenance::Factual } else { Provenance::Counterfactual },
    }
}

proptest! {
    #[test]
    fn soft_update_interpolates_elementwise(seed in 0u64..1000, tau in 0.0f64..=1.0) {
        let mut rng = Rng::seed_from(seed);
        let online = MlpParams::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let start = MlpParams::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let mut target = start.clone();
        soft_update(&mut target, &online, tau).unwrap();
        for (lt, (ls, lo)) in target
            .layers
            .iter()
            .zip(start.layers.iter().zip(online.layers.iter()))
        {
            for ((t, s), o) in lt
                .weight
                .data
                .iter()
                .zip(ls.weight.data.iter())
                .zip(lo.weight.data.iter())
            {
                let expected = (1.0 - tau) * s + tau * o;
                prop_assert!((t - expected).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences(seed in 0u64..200) {
        let mut rng = Rng::seed_from(seed ^ 0xfeed);
        let dims = [2, 3, 1];
        let mlp = MlpParams::new(&dims, Activation::Tanh, Activation::Identity, &mut rng);
        let x = Vector((0..dims[0]).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let (grads, _) = mlp.backward(&x, &Vector(vec![1.0])).unwrap();
        // Central differences on a handful of random weights.
        let h = 1e-6;
        for _ in 0..4 {
            let li = rng.index(mlp.layers.len());
            let wi = rng.index(mlp.layers[li].weight.data.len());
            let mut plus = mlp.clone();
            plus.layers[li].weight.data[wi] += h;
            let mut minus = mlp.clone();
            minus.layers[li].weight.data[wi] -= h;
            let fd = (plus.forward(&x).unwrap().0[0] - minus.forward(&x).unwrap().0[0]) / (2.0 * h);
            let an = grads.layers[li].0.data[wi];
            prop_assert!(
                (fd - an).abs() <= 1e-4 * (1.0 + fd.abs().max(an.abs())),
                "layer {} weight {}: fd {} vs analytic {}", li, wi, fd, an
            );
        }
    }

    #[test]
    fn replay_buffer_ring_invariants(
        capacity in 1usize..20,
        pushes in 0usize..60,
        batch in 1usize..10,
        seed in 0u64..100,
    ) {
        let mut buffer = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buffer.push(transition(i as u64));
        }
        prop_assert_eq!(buffer.len(), pushes.min(capacity));
        // FIFO eviction: survivors are exactly the most recent `len` pushes.
        let mut rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        let expected: Vec<f64> =
            (pushes.saturating_sub(capacity)..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(rewards, expected);
        // Sampling with replacement always fills the batch from live items.
        let mut rng = Rng::seed_from(seed);
        if buffer.is_empty() {
            prop_assert!(buffer.sample(batch, &mut rng).is_err());
        } else {
            let sampled = buffer.sample(batch, &mut rng).unwrap();
            prop_assert_eq!(sampled.len(), batch);
            for t in sampled {
                prop_assert!(t.reward >= pushes.saturating_sub(capacity) as f64);
                prop_assert!(t.reward < pushes as f64);
            }
        }
    }
}
