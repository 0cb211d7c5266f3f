use blockspin::lattice::{dist, dist_to_set, End};
use blockspin::operators::{
    averaging, backward_diff, block_projector, chebyshev_roots, chebyshev_u, delta_field, forward_diff,
    free_laplacian_interior, laplacian_spectrum_1d, min_eigenvalue, neumann_laplacian, scaling_unitary, spectrum,
    Boundary,
};
use blockspin::{Error, Field, KernelOperator, LatticeGeometry, Site, C64};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn s(c: &[i64]) -> Site {
    Site(c.to_vec())
}

fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn field(geom: LatticeGeometry, vals: &[f64]) -> Field {
    Field::from_values(geom, vals.iter().map(|&v| real(v)).collect()).unwrap()
}

#[test]
fn geometry_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    assert_eq!(g.num_sites(), 9);
    assert!((g.spacing() - 1.0 / 3.0).abs() < 1e-15);
    assert!((g.side_length() - 3.0).abs() < 1e-15);

    let unit = LatticeGeometry::new(2, 3, 0, 1).unwrap();
    assert_eq!(unit.num_sites(), 9);
    assert_eq!(unit.spacing(), 1.0);

    assert!(matches!(LatticeGeometry::new(1, 4, 1, 2), Err(Error::Geometry(_))));
    assert!(LatticeGeometry::new(1, 1, 0, 2).is_err());
    assert!(LatticeGeometry::new(1, 3, 3, 2).is_err());
    assert!(LatticeGeometry::with_cap(3, 3, 1, 4, 1000).is_err());
}

#[test]
fn coarse_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    let c = g.coarse(1).unwrap();
    assert_eq!(c.num_sites(), 3);
    assert_eq!(c.spacing(), 1.0);
    assert_eq!(g.coarse(0).unwrap(), g);
    assert!(g.coarse(3).is_err());

    for ell in [-1, 1, 2] {
        let a = g.scaled(ell).coarse(1).unwrap();
        let b = g.coarse(1).unwrap();
        assert_eq!(a.sites().collect::<Vec<_>>(), b.sites().collect::<Vec<_>>());
        assert!((a.spacing() - b.spacing() * 3f64.powi(ell)).abs() < 1e-14);
    }
}

#[test]
fn block_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    assert_eq!(g.block_label(1, &s(&[5])), s(&[1]));
    assert_eq!(g.block_label(0, &s(&[5])), s(&[5]));
    let g2 = LatticeGeometry::new(2, 3, 2, 2).unwrap();
    assert_eq!(g2.block_label(2, &s(&[8, 0])), s(&[0, 0]));

    assert_eq!(g.block_sites(1, &s(&[2])).unwrap(), vec![s(&[6]), s(&[7]), s(&[8])]);
    assert_eq!(g.block_sites(0, &s(&[4])).unwrap(), vec![s(&[4])]);
    assert!(g.block_sites(1, &s(&[3])).is_err());
}

#[test]
fn reflection_and_image_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    assert_eq!(g.reflect(0, End::Low, &s(&[0])), s(&[-1]));
    assert_eq!(g.reflect(0, End::High, &s(&[8])), s(&[9]));

    assert_eq!(g.image_points(&s(&[1]), 0), vec![s(&[1])]);
    let mut imgs: Vec<i64> = g.image_points(&s(&[1]), 1).iter().map(|x| x.0[0]).collect();
    imgs.sort();
    assert_eq!(imgs, vec![-2, 1, 16]);

    let g2 = LatticeGeometry::new(2, 3, 1, 1).unwrap();
    assert_eq!(g2.image_points(&s(&[0, 2]), 2).len(), 25);
}

#[test]
fn distance_examples() {
    assert_eq!(dist(&[0.3, 0.1], &[0.3, 0.1]), 0.0);
    let g = LatticeGeometry::patch(2, 3, 0, 5, 0).unwrap();
    let d = dist(&g.position(&s(&[0, 0])), &g.position(&s(&[3, 4])));
    assert!((d - 5.0).abs() < 1e-15);
    let x = g.position(&s(&[2, 1]));
    assert_eq!(dist_to_set(&x, std::slice::from_ref(&x)).unwrap(), 0.0);
}

#[test]
fn delta_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    let x = s(&[4]);
    let delta = delta_field(g, &x).unwrap();
    assert!((delta.get(&x).unwrap().re - 3.0).abs() < 1e-14);
    assert!((delta.norm().powi(2) - 3.0).abs() < 1e-13);
    let f = Field::random(g, &mut ChaCha8Rng::seed_from_u64(3));
    assert!((delta.inner(&f).unwrap() - f.get(&x).unwrap()).norm() < 1e-14);
}

#[test]
fn two_site_inverse() {
    // (−Δ + 1) on two unit-spaced Neumann sites
    let g = LatticeGeometry::patch(1, 3, 0, 2, 0).unwrap();
    let a = neumann_laplacian(g).scale(-1.0).shift(1.0).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[real(2.0), real(-1.0), real(-1.0), real(2.0)]);
    assert!((a.matrix() - expect).norm() < 1e-15);
    let f = field(g, &[0.7, -1.3]);
    let back = a.invert().unwrap().apply(&a.apply(&f).unwrap()).unwrap();
    assert!(back.sub(&f).unwrap().norm() <= 1e-14);

    let id = KernelOperator::identity(g);
    assert_eq!(id.apply(&f).unwrap(), f);
    assert_eq!(a.adjoint().adjoint(), a);
}

#[test]
fn difference_examples() {
    let g = LatticeGeometry::patch(1, 3, 0, 3, 0).unwrap();
    let f = field(g, &[0.0, 1.0, 2.0]);
    let df = forward_diff(g, 0, Boundary::Neumann).unwrap().apply(&f).unwrap();
    assert_eq!(df, field(g, &[1.0, 1.0, 0.0]));
    let one = field(g, &[1.0, 1.0, 1.0]);
    for op in [forward_diff(g, 0, Boundary::Neumann).unwrap(), backward_diff(g, 0, Boundary::Neumann).unwrap()] {
        assert!(op.apply(&one).unwrap().sup_norm() < 1e-15);
    }
}

#[test]
fn laplacian_examples() {
    let g = LatticeGeometry::patch(1, 3, 0, 2, 0).unwrap();
    let lap = neumann_laplacian(g);
    let expect = DMatrix::from_row_slice(2, 2, &[real(-1.0), real(1.0), real(1.0), real(-1.0)]);
    assert!((lap.matrix() - expect).norm() < 1e-15);
    let ev = spectrum(&lap).unwrap().eigenvalues;
    assert!((ev[0] + 2.0).abs() < 1e-14 && ev[1].abs() < 1e-14);
    let cf = laplacian_spectrum_1d(2, 1.0).closed_form.unwrap();
    assert!((cf[0] + 2.0).abs() < 1e-14 && cf[1].abs() < 1e-14);

    let g2 = LatticeGeometry::new(2, 3, 1, 1).unwrap();
    let one = Field::constant(g2, real(1.0));
    assert!(neumann_laplacian(g2).apply(&one).unwrap().sup_norm() < 1e-12);
}

#[test]
fn neumann_spectrum_matches_closed_form_up_to_82_sites() {
    for n in [2usize, 5, 17, 40, 82] {
        let eta = 0.37;
        let g = LatticeGeometry::patch(1, 3, 0, n, 0).unwrap();
        let mut rep = spectrum(&neumann_laplacian(g)).unwrap();
        // patch spacing is 1, rescale to eta
        rep.eigenvalues.iter_mut().for_each(|v| *v /= eta * eta);
        rep.closed_form = laplacian_spectrum_1d(n, eta).closed_form;
        assert!(rep.max_relative_error().unwrap() <= 1e-10, "n = {n}");
    }
}

#[test]
fn averaging_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    let q = averaging(g, 1).unwrap();
    let f = field(g, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let coarse = q.apply(&f).unwrap();
    assert_eq!(coarse, field(*q.target(), &[2.0, 0.0, 0.0]));
    let one = Field::constant(g, real(1.0));
    assert!(q.apply(&one).unwrap().sub(&Field::constant(*q.target(), real(1.0))).unwrap().sup_norm() < 1e-15);

    let p = block_projector(g, 1).unwrap();
    assert!(p.compose(&p).unwrap().rel_diff(&p).unwrap() <= 1e-14);
}

#[test]
fn scaling_examples() {
    let g = LatticeGeometry::new(2, 3, 1, 1).unwrap();
    assert_eq!(scaling_unitary(g, 0).matrix(), KernelOperator::identity(g).matrix());
    let f = Field::random(g, &mut ChaCha8Rng::seed_from_u64(11));
    let sf = scaling_unitary(g, 2).apply(&f).unwrap();
    assert!((sf.norm() - f.norm()).abs() <= 1e-14 * f.norm());

    for d in [1usize, 2] {
        let g = LatticeGeometry::new(d, 3, 2, 2).unwrap();
        for ell in [1, 2] {
            let sc = scaling_unitary(g, ell);
            let lam2 = 9f64.powi(ell);
            let lhs = neumann_laplacian(*sc.target()).compose(&sc).unwrap();
            let rhs = sc.compose(&neumann_laplacian(g)).unwrap().scale(1.0 / lam2);
            assert!(lhs.rel_diff(&rhs).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn chebyshev_examples() {
    assert_eq!(chebyshev_u(0, 0.3), 1.0);
    assert_eq!(chebyshev_u(1, 0.3), 0.6);
    let r = chebyshev_roots(2);
    assert!((r[0] + 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    for x in r {
        assert!(chebyshev_u(2, x).abs() < 1e-14);
    }
}

#[test]
fn min_eigenvalue_examples() {
    let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
    assert!((min_eigenvalue(&KernelOperator::identity(g)).unwrap() - 1.0).abs() < 1e-14);
    assert!(min_eigenvalue(&neumann_laplacian(g).scale(-1.0)).unwrap().abs() <= 1e-12);

    let cube = LatticeGeometry::new(1, 3, 1, 1).unwrap();
    let num = neumann_laplacian(cube).scale(-1.0).add(&block_projector(cube, 1).unwrap()).unwrap();
    let den = neumann_laplacian(cube).scale(-1.0).shift(1.0).unwrap();
    assert!(min_eigenvalue(&num).unwrap() / min_eigenvalue(&den).unwrap() > 0.0);
}

#[test]
fn free_interior_stencil_matches_plane_waves() {
    let eta = 1.0 / 3.0;
    let g = LatticeGeometry::patch(1, 3, 1, 12, 0).unwrap();
    let p = 1.3;
    let wave = Field::from_fn(g, |x| C64::new(0.0, p * eta * x.0[0] as f64).exp());
    let out = free_laplacian_interior(g).apply(&wave).unwrap();
    let symbol = -2.0 * (1.0 - (p * eta).cos()) / (eta * eta);
    for x in g.sites().filter(|x| x.0[0] > 0 && x.0[0] < 11) {
        let expect = wave.get(&x).unwrap() * symbol;
        assert!((out.get(&x).unwrap() - expect).norm() <= 1e-12 * expect.norm());
    }
}
