//! Ad-hoc speed probe (ignored by default).

use ndarray::{Array3, Array4, ArrayD, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use segqc::hierarchy::ClassHierarchy;
use segqc::mask::LabelMask;
use segqc::model::{QcResUNet, QcResUNetConfig};
use segqc::volume::Volume;

#[test]
#[ignore]
fn forward_backward_speed() {
    for (f, shape) in [(8usize, (32usize, 32usize, 32usize)), (16, (32, 32, 32))] {
        let cfg = QcResUNetConfig::brain(1, 3, f);
        let net = QcResUNet::new(cfg, 7).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let v = Volume::new(
            Array4::from_shape_simple_fn((1, shape.0, shape.1, shape.2), || rng.random_range(-1.0f32..1.0)),
            [1.0; 3],
            vec!["M1".into()],
        )
        .unwrap();
        let codes = [0u8, 1, 2, 4];
        let q = LabelMask::new(
            Array3::from_shape_fn(shape, |_| *codes.choose(&mut rng).unwrap()),
            ClassHierarchy::brats(),
        )
        .unwrap();
        let t0 = std::time::Instant::now();
        let pass = net.forward_pass(&v, &q, None).unwrap();
        let fwd = t0.elapsed();
        let sem_shape = pass.tape.value(pass.sem_prob).shape().to_vec();
        let t1 = std::time::Instant::now();
        let grads = pass.tape.backward(vec![
            (pass.scores, ArrayD::from_elem(IxDyn(&[2]), 1.0f32)),
            (pass.sem_prob, ArrayD::from_elem(IxDyn(&sem_shape), 1e-4f32)),
        ]);
        let bwd = t1.elapsed();
        let t2 = std::time::Instant::now();
        let pg = pass.tape.param_grads(&grads, net.params());
        let collect = t2.elapsed();
        println!(
            "base={f} shape={shape:?} params={} fwd={fwd:?} bwd={bwd:?} collect={collect:?} ({} grads)",
            net.num_parameters(),
            pg.len()
        );
    }
}
