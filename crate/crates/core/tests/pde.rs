use std::f64::consts::PI;
use std::time::Instant;

use perishape_core::eigen::eigenpairs;
use perishape_core::pde::{dirichlet_energy, solve_poisson, torsion, DirichletOperator};
use perishape_core::{GridSpec, LevelSetField, ScalarField, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First positive zero of J0, by bisection on its power series.
fn bessel_j0_zero() -> f64 {
    let j0 = |x: f64| {
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..60 {
            term *= -(x * x / 4.0) / (m as f64 * m as f64);
            sum += term;
        }
        sum
    };
    let (mut a, mut b) = (2.0, 3.0);
    for _ in 0..100 {
        let c = 0.5 * (a + b);
        if j0(a) * j0(c) <= 0.0 {
            b = c;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Torsion of the unit square at its centre from the double sine series.
fn square_torsion_centre() -> f64 {
    let mut s = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let sign = if ((m + n) / 2 - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let (m, n) = (m as f64, n as f64);
            s += sign / (m * n * (m * m + n * n));
        }
    }
    16.0 / PI.powi(4) * s
}

fn disk(h: f64) -> LevelSetField {
    let g = GridSpec::centered([0.0, 0.0], 1.25, h).unwrap();
    Shape::disk([0.0, 0.0], 1.0).rasterize(&g).unwrap()
}

fn unit_square(h: f64) -> LevelSetField {
    let g = GridSpec::covering(-0.25, 1.25, -0.25, 1.25, h).unwrap();
    Shape::rectangle([0.0, 0.0], [1.0, 1.0]).rasterize(&g).unwrap()
}

#[test]
fn oracles_are_sane() {
    assert!((bessel_j0_zero() - 2.404825557695773).abs() < 1e-12);
    assert!((square_torsion_centre() - 0.0737).abs() < 1e-4);
}

#[test]
fn disk_first_eigenvalue() {
    let start = Instant::now();
    let r = eigenpairs(&disk(1.0 / 128.0), 1).unwrap();
    let exact = bessel_j0_zero().powi(2);
    assert!((r.values[0] - exact).abs() < 0.01 * exact, "{}", r.values[0]);
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn square_first_eigenvalue_and_continuum_limit() {
    let h = 1.0 / 64.0;
    let r = eigenpairs(&unit_square(h), 1).unwrap();
    let exact = 2.0 * PI * PI;
    assert!((r.values[0] - exact).abs() < 0.01 * exact);
}

#[test]
fn quarter_spacing_square_matches_sine_spectrum() {
    // Grid h = 1/4 leaves a 3x3 interior block.
    let g = GridSpec::new(16, 16, 0.25, [-1.0, -1.0]).unwrap();
    let s = Shape::rectangle([0.0, 0.0], [1.0, 1.0]).rasterize(&g).unwrap();
    assert_eq!(s.interior_count(), 9);
    let op = DirichletOperator::assemble(&s).unwrap();
    assert_eq!(op.size(), 9);
    let h = 0.25;
    let exact = 2.0 / (h * h) * (2.0 - 2.0 * (PI * h).cos());
    // Power iteration on the shifted operator as an independent check.
    let mut x = vec![1.0; 9];
    let mut y = vec![0.0; 9];
    let shift = 8.0 / (h * h);
    let mut lam = 0.0;
    for _ in 0..500 {
        op.apply(&x, &mut y);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| shift * a - b).collect();
        let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        lam = shift - n / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = z.iter().map(|v| v / n).collect();
    }
    assert!((lam - exact).abs() < 1e-9 * exact);
}

#[test]
fn disk_torsion_and_energy() {
    let s = disk(1.0 / 128.0);
    let w = torsion(&s).unwrap();
    assert!((w.interpolate([0.0, 0.0]) - 0.25).abs() < 0.0025);
    let one = ScalarField::from_fn(*s.grid(), |_| 1.0).unwrap();
    let e = dirichlet_energy(&s, &one).unwrap();
    assert!((e + PI / 16.0).abs() < 0.02 * PI / 16.0, "{e}");
}

#[test]
fn square_torsion_maximum() {
    let w = torsion(&unit_square(1.0 / 64.0)).unwrap();
    let exact = square_torsion_centre();
    assert!((w.max() - exact).abs() < 0.01 * exact);
}

#[test]
fn poisson_is_translation_equivariant() {
    let h = 1.0 / 32.0;
    let g = GridSpec::centered([0.0, 0.0], 1.5, h).unwrap();
    let a = Shape::ellipse([0.0, 0.0], 0.9, 0.6).rasterize(&g).unwrap();
    let b = a.shifted(3, -2, a.values()[0]);
    let wa = torsion(&a).unwrap();
    let wb = torsion(&b).unwrap();
    for j in 5..g.ny - 5 {
        for i in 5..g.nx - 5 {
            let va = wa.values()[g.index(i - 3, j + 2)];
            let vb = wb.values()[g.index(i, j)];
            assert!((va - vb).abs() <= 1e-9 * wa.max());
        }
    }
}

#[test]
fn resolvent_is_symmetric_and_positive() {
    let h = 1.0 / 32.0;
    let g = GridSpec::centered([0.0, 0.0], 1.5, h).unwrap();
    let s = Shape::Union(vec![Shape::disk([-0.3, 0.0], 0.6), Shape::rectangle([0.0, -0.4], [1.0, 0.3])])
        .rasterize(&g)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let f = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let q = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let rf = solve_poisson(&s, &f).unwrap();
        let rq = solve_poisson(&s, &q).unwrap();
        let ip = |a: &ScalarField, b: &ScalarField| a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>();
        let (a, b) = (ip(&f, &rq), ip(&q, &rf));
        assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
        assert!(ip(&f, &rf) > 0.0);
    }
}

#[test]
fn eigen_invariants_hold() {
    let h = 1.0 / 48.0;
    let g = GridSpec::centered([0.0, 0.0], 1.3, h).unwrap();
    let s = Shape::disk([0.0, 0.0], 1.0).rasterize(&g).unwrap();
    let r = eigenpairs(&s, 5).unwrap();
    let op = DirichletOperator::assemble(&s).unwrap();
    for (lam, u) in r.values.iter().zip(&r.vectors) {
        let x = op.restrict(u.values());
        let mut y = vec![0.0; x.len()];
        op.apply(&x, &mut y);
        let res: f64 = y.iter().zip(&x).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-7 * lam * norm);
        let l2: f64 = x.iter().map(|v| v * v).sum::<f64>() * h * h;
        assert!((l2 - 1.0).abs() < 1e-8);
    }
    assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
    // The centred disk has a doubly degenerate second eigenvalue.
    assert_eq!(r.cluster_of(1), 1..3);
    let j11 = 3.831705970207512;
    assert!((r.values[1] - j11 * j11).abs() < 0.03 * j11 * j11);
}
