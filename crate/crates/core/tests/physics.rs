mod common;

use common::{mass_drift, poiseuille};
use slbm::kernels::trt::DEFAULT_MAGIC;
use slbm::{make_channel, order_lexicographic, run, TrtParams, Variant};

#[test]
fn poiseuille_profile_default_magic() {
    let p = poiseuille(17, DEFAULT_MAGIC, 6000, Variant::AaRp);
    println!(
        "error {:.3e} peak {} vs {}",
        p.max_relative_error, p.peak_numeric, p.peak_analytic
    );
    assert!(p.max_relative_error < 0.01);
}

#[test]
fn poiseuille_exact_wall_magic() {
    let p = poiseuille(17, 3.0 / 16.0, 6000, Variant::OsNt);
    println!("error {:.3e}", p.max_relative_error);
    assert!(p.max_relative_error < 1e-3);
}

#[test]
fn mass_is_conserved() {
    for v in Variant::ALL {
        let d = mass_drift(v, 1000);
        assert!(d < 1e-12, "{v}: {d:e}");
    }
}

#[test]
fn channel_stays_stable() {
    let g = make_channel(12, 8, 8).unwrap();
    let o = order_lexicographic(&g, 1).unwrap();
    let params = TrtParams::new(1.0, 0.25, [1e-6, 0.0, 0.0]).unwrap();
    let r = run(&g, &o, Variant::AaRp, params, 10_000).unwrap();
    assert!(r.field.all_finite());
    assert!(r.max_velocity > 0.0 && r.max_velocity < 0.1);
}
