use std::sync::Arc;

use lcfem::assembly::*;
use lcfem::estimator::*;
use lcfem::fespace::{eval_basis, interpolate, BoundaryData, Field, FieldLayout};
use lcfem::mesh::{BBox, Mesh};
use lcfem::physics::{dot, side_flux, strong_residuals, Formulation, MaterialParams};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Const([f64; 3]);

impl BoundaryData for Const {
    fn director(&self, _p: [f64; 2]) -> [f64; 3] {
        self.0
    }
}

struct Smooth;

impl BoundaryData for Smooth {
    fn director(&self, p: [f64; 2]) -> [f64; 3] {
        let a = 1.3 * p[0] - 0.4 * p[1];
        [a.sin() * 0.9, 0.2 + 0.1 * p[0] * p[1], a.cos() * 0.8]
    }
    fn potential(&self, p: [f64; 2]) -> f64 {
        p[0] * p[1] - 0.5 * p[1]
    }
}

fn layout(params: &MaterialParams) -> FieldLayout {
    FieldLayout {
        electric: params.electric,
        multiplier: params.formulation == Formulation::Lagrangian,
    }
}

fn graded() -> Mesh {
    let m = Mesh::uniform(3, 3, BBox::UNIT).unwrap();
    let m = m.refine(&[4]).unwrap();
    let c = m.active_cells()[m.active_cells().len() - 1];
    m.refine(&[c]).unwrap()
}

fn disc(mesh: Mesh, params: &MaterialParams, bd: &dyn BoundaryData, q: usize) -> Discretization {
    Discretization::new(
        mesh,
        layout(params),
        bd,
        Arc::new(BasisTables::new(q).unwrap()),
    )
    .unwrap()
}

#[test]
fn constant_unit_director_has_zero_estimator() {
    for (n, params) in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
        .into_iter()
        .zip([
            MaterialParams::elastic(Formulation::Penalty, 1e8),
            MaterialParams::flexo_5cb(Formulation::Penalty, 1e5),
            MaterialParams::flexo_5cb(Formulation::Lagrangian, 0.0),
        ])
    {
        let d = disc(graded(), &params, &Const(n), 5);
        let v = interpolate(&d.dofs, |f, _| f.component().map_or(0.0, |i| n[i]));
        let loc = local_estimates(&d, &params, &v).unwrap();
        // the basis sums to one only up to rounding, amplified by the penalty weight
        let tol = 1e-12 * params.zeta.max(1.0);
        assert!(global_estimate(&loc) < tol, "{}", global_estimate(&loc));
        if params.electric {
            assert!(gauss_conformance(&d, &params, &v).unwrap() < 1e-24);
        }
    }
}

#[test]
fn linear_director_has_no_edge_jumps() {
    let params = MaterialParams::elastic(Formulation::Penalty, 10.0);
    let lin = |p: [f64; 2]| {
        [
            0.3 + 0.5 * p[0] - 0.2 * p[1],
            0.1 - p[0] + 0.7 * p[1],
            0.4 * p[1],
        ]
    };
    struct Lin;
    impl BoundaryData for Lin {
        fn director(&self, p: [f64; 2]) -> [f64; 3] {
            [
                0.3 + 0.5 * p[0] - 0.2 * p[1],
                0.1 - p[0] + 0.7 * p[1],
                0.4 * p[1],
            ]
        }
    }
    let d = disc(graded(), &params, &Lin, 5);
    let v = interpolate(&d.dofs, |f, p| lin(p)[f.component().unwrap()]);
    for e in local_estimates(&d, &params, &v).unwrap() {
        assert!(e.edges < 1e-24, "{}", e.edges);
        assert!(e.volume_director > 0.0);
        assert_eq!(e.volume_potential, 0.0);
    }
}

#[test]
fn zeroed_couplings_collapse_to_elastic_estimator() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut flexo = MaterialParams::flexo_5cb(Formulation::Penalty, 50.0);
    flexo.e_s = 0.0;
    flexo.e_b = 0.0;
    flexo.electric = false;
    let mut elastic = MaterialParams::elastic(Formulation::Penalty, 50.0);
    elastic.k2 = flexo.k2;
    elastic.k3 = flexo.k3;
    let d = disc(graded(), &elastic, &Smooth, 5);
    let mut v: Vec<f64> = (0..d.dofs.n_dofs())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    d.constraints.apply(&mut v);
    let a = local_estimates(&d, &elastic, &v).unwrap();
    let b = local_estimates(&d, &flexo, &v).unwrap();
    assert_eq!(a, b);
    assert!(b.iter().all(|e| e.volume_potential == 0.0));
}

#[test]
fn gauss_conformance_equals_integrated_q_squared() {
    let mut rng = StdRng::seed_from_u64(6);
    let params = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
    let d = disc(graded(), &params, &Smooth, 5);
    let mut v: Vec<f64> = (0..d.dofs.n_dofs())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    d.constraints.apply(&mut v);
    let g = gauss_conformance(&d, &params, &v).unwrap();
    let (x, w) = lcfem::fespace::gauss_legendre(5);
    let mut s = 0.0;
    for (pos, &c) in d.dofs.active_cells().iter().enumerate() {
        let area = d.mesh.cell(c).bbox.area();
        for j in 0..5 {
            for i in 0..5 {
                let q = strong_residuals(&params, &d.point_fields_at(pos, [x[i], x[j]], &v))
                    .unwrap()
                    .q;
                s += w[i] * w[j] * area * q * q;
            }
        }
    }
    assert!((g - s).abs() < 1e-12 * s);
    let elastic = MaterialParams::elastic(Formulation::Penalty, 1.0);
    assert!(gauss_conformance(&d, &elastic, &v).is_err());
}

/// Elementwise integration by parts: the assembled residual tested with a
/// free basis function equals `sum_T int_T p.v + sum_E int_E [p_hat].v`.
#[test]
fn weak_residual_splits_into_strong_and_jump_terms() {
    let mut rng = StdRng::seed_from_u64(8);
    for params in [
        MaterialParams::elastic(Formulation::Penalty, 3.0),
        MaterialParams::flexo_5cb(Formulation::Penalty, 3.0),
        MaterialParams::flexo_5cb(Formulation::Lagrangian, 0.0),
    ] {
        let d = disc(graded(), &params, &Smooth, 6);
        let mut v: Vec<f64> = (0..d.dofs.n_dofs())
            .map(|_| rng.random_range(-0.7..0.7))
            .collect();
        d.constraints.apply(&mut v);
        let r = assemble_residual(&d, &params, &v).unwrap();
        let (xq, wq) = lcfem::fespace::gauss_legendre(6);
        for _ in 0..12 {
            let k = rng.random_range(0..d.n_free());
            let dof = d.constraints.free_dof(k);
            let (field, _) = d.dofs.dof_field(dof);
            if field == Field::Multiplier {
                continue;
            }
            // test function: unit free value at k, constraints homogeneous
            let mut t = vec![0.0; d.dofs.n_dofs()];
            for (dd, slot) in t.iter_mut().enumerate() {
                let (idx, w, _) = d.constraints.expansion(dd);
                *slot = idx
                    .iter()
                    .zip(w)
                    .filter(|(&i, _)| i as usize == k)
                    .map(|(_, &w)| w)
                    .sum();
            }
            let test_at = |pos: usize, rp: [f64; 2]| -> ([f64; 3], f64) {
                let b = eval_basis(2, rp).unwrap();
                let mut vv = [0.0; 3];
                let mut psi = 0.0;
                for &f in d.dofs.fields() {
                    if f == Field::Multiplier {
                        continue;
                    }
                    let s: f64 = d
                        .dofs
                        .cell_dofs(pos, f)
                        .enumerate()
                        .map(|(l, g)| t[g] * b.values[l])
                        .sum();
                    match f.component() {
                        Some(i) => vv[i] = s,
                        None => psi = s,
                    }
                }
                (vv, psi)
            };
            let mut total = 0.0;
            for (pos, &c) in d.dofs.active_cells().iter().enumerate() {
                let area = d.mesh.cell(c).bbox.area();
                for j in 0..6 {
                    for i in 0..6 {
                        let rp = [xq[i], xq[j]];
                        let (tv, tpsi) = test_at(pos, rp);
                        let sr =
                            strong_residuals(&params, &d.point_fields_at(pos, rp, &v)).unwrap();
                        total += wq[i] * wq[j] * area * (dot(sr.p, tv) + sr.q * tpsi);
                    }
                }
            }
            for e in d.mesh.active_edges() {
                let Some((m, p)) = e.sides() else { continue };
                let (pm, pp) = (d.dofs.position(m).unwrap(), d.dofs.position(p).unwrap());
                let (bm, bp) = (d.mesh.cell(m).bbox, d.mesh.cell(p).bbox);
                for (&s, &w) in xq.iter().zip(&wq) {
                    let x = e.point_at(s);
                    let fm = side_flux(
                        &params,
                        &d.point_fields_at(pm, bm.to_reference(x), &v),
                        e.normal,
                    );
                    let fp = side_flux(
                        &params,
                        &d.point_fields_at(pp, bp.to_reference(x), &v),
                        e.normal,
                    );
                    let (tv, tpsi) = test_at(pm, bm.to_reference(x));
                    let jp = [
                        fm.p_hat[0] - fp.p_hat[0],
                        fm.p_hat[1] - fp.p_hat[1],
                        fm.p_hat[2] - fp.p_hat[2],
                    ];
                    total += w * e.length * (dot(jp, tv) + (fm.q_hat - fp.q_hat) * tpsi);
                }
            }
            assert!(
                (total - r[k]).abs() < 1e-8 * r[k].abs().max(1.0),
                "{field:?}: {total} vs {}",
                r[k]
            );
        }
    }
}
