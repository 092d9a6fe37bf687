use segqc::datagen::{generate_phantom, PhantomSpec};
use segqc::hierarchy::ClassHierarchy;
use segqc::metrics::multiclass_dsc;
use segqc::proxyseg::{ProxySegConfig, ProxySegNet};

#[test]
#[ignore]
fn proxy_overfit_sweep() {
    for (grid, base, depth, p) in [
        (12usize, 8usize, 2usize, 0.5f64),
        (12, 16, 2, 0.5),
        (12, 8, 3, 0.5),
        (12, 16, 3, 0.5),
        (12, 16, 3, 0.3),
        (16, 16, 3, 0.5),
    ] {
        for lr in [1e-2] {
            let (vol, gt) = generate_phantom(&PhantomSpec::default_brain(grid), 21).unwrap();
            let cfg = ProxySegConfig { base_channels: base, depth, dropout_p: p, ..ProxySegConfig::new(1) };
            let mut net =
                ProxySegNet::new(cfg, ClassHierarchy::brats(), 5).unwrap();
            let t = std::time::Instant::now();
            for chunk in 0..4 {
                net.train(&[(&vol, &gt)], 50, lr, 7 + chunk).unwrap();
                let seg = net.segment_labels(&vol).unwrap();
                let d = multiclass_dsc(&seg, &gt).unwrap();
                print!(" e{}: {d:.3}", (chunk + 1) * 50);
            }
            println!("  [grid={grid} base={base} depth={depth} p={p} lr={lr} took {:?}]", t.elapsed());
        }
    }
}
