use lorapar::problems::{self, AffineSylvester, SpectrumSpec, VectorField};
use lorapar::{dense, rng, Mat};

fn affine_fields() -> Vec<VectorField> {
    let mut g = rng::seeded(3);
    let left = problems::build_laplacian_1d(8, (0.0, 1.0)).unwrap();
    let right = rng::gaussian(&mut g, 6, 6) * 0.3 - Mat::identity(6, 6) * 2.0;
    vec![
        problems::build_lyapunov_heat(12, &SpectrumSpec::geometric(2.0, 4, 1)).unwrap(),
        problems::build_cookie_synthetic(10, 5).unwrap(),
        VectorField::AffineSylvester(
            AffineSylvester::new(left, right, rng::gaussian(&mut g, 8, 6)).unwrap(),
        ),
    ]
}

#[test]
fn affine_fields_are_affine() {
    let mut g = rng::seeded(11);
    for f in affine_fields() {
        assert!(f.is_affine());
        let (m, n) = f.state_shape();
        for _ in 0..20 {
            let x = rng::gaussian(&mut g, m, n);
            let y = rng::gaussian(&mut g, m, n);
            let a = 0.37;
            let lhs = f.eval(&(&x * a + &y * (1.0 - a))).unwrap();
            let rhs = f.eval(&x).unwrap() * a + f.eval(&y).unwrap() * (1.0 - a);
            assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        }
    }
}

#[test]
fn one_sided_lipschitz_holds_on_random_pairs() {
    let mut g = rng::seeded(12);
    for f in affine_fields() {
        let ell = f.one_sided_lipschitz().unwrap();
        let (m, n) = f.state_shape();
        for _ in 0..100 {
            let x = rng::gaussian(&mut g, m, n);
            let y = rng::gaussian(&mut g, m, n);
            let d = &x - &y;
            let lhs = dense::inner(&(f.eval(&x).unwrap() - f.eval(&y).unwrap()), &d);
            let rhs = ell * d.norm_squared();
            assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0), "{lhs} > {rhs}");
        }
    }
}

#[test]
fn riccati_is_not_affine() {
    let f = problems::build_riccati_problem(16, 3).unwrap();
    assert!(!f.is_affine());
    assert!(f.one_sided_lipschitz().is_err());
}
