use koopman_core::diagnostics::{claim_gaps, invariance_defect, projection_check};
use koopman_core::linalg::spectral_norm;
use koopman_core::solver::Penalty;
use koopman_core::systems::{generate_snapshots, InitialStates};
use koopman_core::*;
use proptest::prelude::*;

const CASES: u32 = 48;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn poly_dict(n: usize, degree: u32) -> Dictionary {
    make_standard_dictionary(&StandardDictionarySpec {
        state_dim: n,
        monomial_degree: Some(degree),
        rbf_centers: None,
        rbf_bandwidth: None,
        include_state: true,
        output_guess_rows: None,
    })
    .unwrap()
}

fn mixed_dict() -> Dictionary {
    Dictionary::new(
        2,
        vec![
            BasisFunction::Constant,
            BasisFunction::Coordinate { index: 0 },
            BasisFunction::Monomial { exponents: vec![1, 2] },
            BasisFunction::GaussianRbf { center: vec![0.2, -0.1], bandwidth: 0.7 },
            BasisFunction::ThinPlateSpline { center: vec![-0.3, 0.4] },
        ],
    )
    .unwrap()
}

/// Random data with nonlinear successors and outputs.
fn instance(m: usize) -> impl Strategy<Value = SnapshotSet> {
    (matrix(m, 2, -1.0, 1.0), matrix(2, 2, -0.9, 0.9), matrix(m, 2, -1.0, 1.0)).prop_map(|(x, a, y)| {
        let xp = DMatrix::from_fn(x.nrows(), 2, |r, c| {
            (a[(c, 0)] * x[(r, 0)] + a[(c, 1)] * x[(r, 1)]).sin() + 0.1 * x[(r, c)] * x[(r, c)]
        });
        SnapshotSet::with_outputs(x, xp, Some(y), None).unwrap()
    })
}

fn ridge_objective(psi: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, q: &DMatrix<f64>, w0: &DMatrix<f64>) -> f64 {
    let m = psi.nrows() as f64;
    let d = w - w0;
    (y - psi * w).norm_squared() / m + (d.transpose() * q * &d).trace()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn evaluation_stacks_and_is_deterministic(x in matrix(6, 2, -2.0, 2.0)) {
        let d = mixed_dict();
        let full = d.evaluate_matrix(&x).unwrap();
        for r in 0..x.nrows() {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let single = d.evaluate(&row).unwrap();
            prop_assert_eq!(full.row(r).transpose(), single);
        }
        prop_assert_eq!(full, d.evaluate_matrix(&x).unwrap());
    }

    #[test]
    fn gram_identities(data in instance(12), shift in 0usize..12) {
        let d = mixed_dict();
        let gram = build_gram(&d, &data).unwrap();
        let psi = d.evaluate_matrix(data.x()).unwrap();
        let m = data.len() as f64;
        let oracle = psi.transpose() * &psi / m;
        prop_assert!((&gram.g - &oracle).norm() <= 1e-14 * oracle.norm());

        // Cauchy-Schwarz
        for i in 0..d.len() {
            for j in 0..d.len() {
                let bound = (gram.g[(i, i)] * gram.g[(j, j)]).sqrt();
                prop_assert!(gram.g[(i, j)].abs() <= bound + 1e-12 * bound.max(1.0));
            }
        }

        // rotate the sample order
        let perm = |mat: &DMatrix<f64>| {
            DMatrix::from_fn(mat.nrows(), mat.ncols(), |r, c| mat[((r + shift) % mat.nrows(), c)])
        };
        let permuted = SnapshotSet::with_outputs(
            perm(data.x()),
            perm(data.x_plus()),
            Some(perm(data.y().unwrap())),
            None,
        )
        .unwrap();
        let pg = build_gram(&d, &permuted).unwrap();
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm() / b.norm();
        prop_assert!(rel(&pg.g, &gram.g) <= 1e-12);
        prop_assert!(rel(&pg.a, &gram.a) <= 1e-12);
        prop_assert!(rel(pg.b.as_ref().unwrap(), gram.b.as_ref().unwrap()) <= 1e-12);
    }

    #[test]
    fn duplicate_entries_give_identical_rows(x in matrix(7, 2, -1.0, 1.0)) {
        let rbf = BasisFunction::GaussianRbf { center: vec![0.1, 0.1], bandwidth: 0.5 };
        let d = Dictionary::new(2, vec![rbf.clone(), BasisFunction::Coordinate { index: 1 }, rbf]).unwrap();
        let data = SnapshotSet::new(x.clone(), x.map(|v| 0.5 * v)).unwrap();
        let g = build_gram(&d, &data).unwrap().g;
        prop_assert_eq!(g.row(0).into_owned(), g.row(2).into_owned());
        prop_assert_eq!(g.column(0).into_owned(), g.column(2).into_owned());
    }

    #[test]
    fn ridge_and_tikhonov_first_order_optimality(
        data in instance(15),
        beta in 1e-3f64..1.0,
        w0 in matrix(5, 2, -1.0, 1.0),
    ) {
        let d = mixed_dict();
        let gram = build_gram(&d, &data).unwrap();
        let psi = d.evaluate_matrix(data.x()).unwrap();
        let y = data.y().unwrap();
        let n = d.len();
        let q = DMatrix::identity(n, n) * beta;
        let specs = [
            (RegularizerSpec::Ridge { beta }, DMatrix::zeros(n, 2)),
            (RegularizerSpec::Tikhonov { q: Penalty::Scalar(beta), w0: w0.clone(), prior_columns: None }, w0.clone()),
        ];
        for (spec, prior) in specs {
            let w = output_weights(&gram, &spec).unwrap();
            let base = ridge_objective(&psi, y, &w, &q, &prior);
            for col in 0..2 {
                for k in 0..n {
                    for delta in [1e-4, -1e-4] {
                        let mut wp = w.clone();
                        wp[(k, col)] += delta;
                        prop_assert!(ridge_objective(&psi, y, &wp, &q, &prior) > base);
                    }
                }
            }
        }
    }

    #[test]
    fn ridge_normal_equations_and_monotonicity(data in instance(15)) {
        let d = mixed_dict();
        let gram = build_gram(&d, &data).unwrap();
        let b = gram.b.clone().unwrap();
        let n = d.len();
        let mut previous = f64::INFINITY;
        for beta in [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0] {
            let w = output_weights(&gram, &RegularizerSpec::Ridge { beta }).unwrap();
            let resid = (&gram.g + DMatrix::identity(n, n) * beta) * &w - &b;
            let scale = (gram.g.norm() + beta) * w.norm() + b.norm();
            prop_assert!(resid.norm() <= 1e-10 * scale);

            let k = koopman_matrix(&gram, &RegularizerSpec::Ridge { beta }).unwrap();
            prop_assert!(k.norm() <= previous * (1.0 + 1e-12));
            previous = k.norm();
        }
    }

    #[test]
    fn pseudoinverse_matches_ridge_zero_when_invertible(data in instance(20)) {
        let d = poly_dict(2, 2);
        let gram = build_gram(&d, &data).unwrap();
        let pinv = koopman_matrix(&gram, &RegularizerSpec::default()).unwrap();
        let ridge = koopman_matrix(&gram, &RegularizerSpec::Ridge { beta: 0.0 }).unwrap();
        prop_assert!((&pinv - &ridge).norm() <= 1e-10 * ridge.norm());
    }

    #[test]
    fn pseudoinverse_is_minimum_norm_on_rank_deficient(x in matrix(10, 2, -1.0, 1.0), a in matrix(2, 2, -0.9, 0.9)) {
        // the last column duplicates a combination of the first two
        let d = Dictionary::new(
            2,
            vec![
                BasisFunction::Coordinate { index: 0 },
                BasisFunction::Coordinate { index: 1 },
                BasisFunction::AffineOutput { row: vec![1.0, -2.0] },
            ],
        )
        .unwrap();
        let xp = &x * a.transpose();
        let data = SnapshotSet::new(x, xp).unwrap();
        let psi = d.evaluate_matrix(data.x()).unwrap();
        let psi_p = d.evaluate_matrix(data.x_plus()).unwrap();
        let k = koopman_matrix(&build_gram(&d, &data).unwrap(), &RegularizerSpec::default()).unwrap();
        let oracle = psi.clone().pseudo_inverse(1e-10).unwrap() * &psi_p;
        prop_assert!((&k - &oracle).norm() <= 1e-10 * oracle.norm().max(1.0));

        // any null-space shift is also a minimiser but has larger norm
        let null = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, -1.0]);
        let shifted = &k + &null * DMatrix::from_row_slice(1, 3, &[0.3, -0.2, 0.1]);
        let r = |kk: &DMatrix<f64>| (&psi_p - &psi * kk).norm();
        prop_assert!((r(&shifted) - r(&k)).abs() <= 1e-10 * psi_p.norm().max(1.0));
        prop_assert!(shifted.norm() > k.norm());
    }

    #[test]
    fn residual_never_improves_under_perturbation(data in instance(12), e in matrix(5, 5, -1.0, 1.0)) {
        let d = mixed_dict();
        let k = koopman_matrix(&build_gram(&d, &data).unwrap(), &RegularizerSpec::default()).unwrap();
        let psi = d.evaluate_matrix(data.x()).unwrap();
        let psi_p = d.evaluate_matrix(data.x_plus()).unwrap();
        let unit = &e / e.norm();
        let base = (&psi_p - &psi * &k).norm();
        for delta in [1e-4, -1e-4] {
            let kp = &k + &unit * delta;
            prop_assert!((&psi_p - &psi * kp).norm() >= base * (1.0 - 1e-14));
        }
    }

    #[test]
    fn lemma1_holds_for_projection_weights(data in instance(10)) {
        let d = mixed_dict();
        let gram = build_gram(&d, &data).unwrap();
        let w = output_weights(&gram, &RegularizerSpec::default()).unwrap();
        let psi = d.evaluate_matrix(data.x()).unwrap();
        let y = data.y().unwrap();
        for i in 0..y.ncols() {
            let scale = y.column(i).norm().max(1.0);
            prop_assert!((&psi * w.column(i)).norm() <= y.column(i).norm() + 1e-10 * scale);
        }
        for margin in projection_check(&gram, &data, &w).unwrap() {
            prop_assert!(margin >= -1e-10);
        }
    }

    #[test]
    fn claim1_direction_and_invariance_implication(
        x in matrix(12, 2, -1.0, 1.0),
        a in matrix(2, 2, -0.9, 0.9),
        w in matrix(3, 2, -1.0, 1.0),
        nonlinear in any::<bool>(),
    ) {
        let d = poly_dict(2, 1);
        let xp = if nonlinear {
            x.map(|v| v + 0.3 * v * v)
        } else {
            &x * a.transpose()
        };
        let psi = d.evaluate_matrix(&x).unwrap();
        let psi_p = d.evaluate_matrix(&xp).unwrap();
        let y = &psi * &w;
        let yp = &psi_p * &w;
        let data = SnapshotSet::with_outputs(x, xp, Some(y), Some(yp.clone())).unwrap();
        let gram = build_gram(&d, &data).unwrap();
        let k = koopman_matrix(&gram, &RegularizerSpec::default()).unwrap();
        let w_plus = psi.clone().pseudo_inverse(1e-13).unwrap() * &yp;
        for i in 0..2 {
            let lhs = (&psi * &k * w.column(i)).norm();
            let rhs = (&psi * w_plus.column(i)).norm();
            prop_assert!(lhs >= rhs - 1e-10 * yp.column(i).norm().max(1.0));
        }
        let defect = invariance_defect(&d, &data, &k).unwrap();
        let gaps = claim_gaps(&d, &data, &k, &w, &w).unwrap();
        if defect <= 1e-10 {
            for g in gaps.claim1 {
                prop_assert!(g <= 1e-10 * w.norm().max(1.0));
            }
        }
        if !nonlinear {
            prop_assert!(defect <= 1e-10);
        }
    }

    #[test]
    fn prediction_matches_matrix_power(a in matrix(3, 3, -0.6, 0.6), x0 in prop::collection::vec(-1.0f64..1.0, 3)) {
        let sys = ReferenceSystem::full_state(SystemKind::Linear { a: a.clone() }).unwrap();
        let init = InitialStates::Random { count: 4, low: vec![-1.0; 3], high: vec![1.0; 3] };
        let data = generate_snapshots(&sys, &init, 8, 3).unwrap().data;
        let d = poly_dict(3, 1);
        let model = fit_model(&d, &data, &FitOptions::default()).unwrap();
        prop_assume!(model.meta.eig_condition < 1e6);
        let psi0 = d.evaluate(&x0).unwrap();

        // k = 0: mode expansion reproduces W^T psi(x)
        let direct = model.w.transpose() * &psi0;
        let y0 = model.predict(&x0, 0).unwrap();
        prop_assert!((&y0 - &direct).norm() <= 1e-9 * direct.norm().max(1e-3));

        let mut z = psi0.clone();
        let traj = model.predict_trajectory(&x0, 20).unwrap();
        for k in 0..=20u32 {
            if k > 0 {
                z = model.k.transpose() * z;
            }
            let oracle = model.w.transpose() * &z;
            let got = model.predict_detailed(&x0, k).unwrap();
            let scale = oracle.norm().max(1e-4 * model.w.norm() * psi0.norm());
            prop_assert!((&got.outputs - &oracle).norm() <= 1e-8 * scale, "k = {}", k);
            prop_assert!(got.imaginary_residue <= 1e-8);
            let row = traj.row(k as usize).transpose();
            prop_assert!((&row - &oracle).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn linear_observable_action_is_linear(a in matrix(3, 3, -1.0, 1.0), wa in matrix(3, 1, -1.0, 1.0), wb in matrix(3, 1, -1.0, 1.0), c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let combined = &a * (&wa * c1 + &wb * c2);
        let separate = (&a * &wa) * c1 + (&a * &wb) * c2;
        prop_assert!((combined - separate).norm() <= 1e-14 * (spectral_norm(&a) + 1.0) * 8.0);
    }

    #[test]
    fn linear_generation_is_exact_and_consistent(a in matrix(2, 2, -1.0, 1.0), seed in 0u64..1000) {
        let sys = ReferenceSystem::full_state(SystemKind::Linear { a: a.clone() }).unwrap();
        let init = InitialStates::Random { count: 3, low: vec![-1.0; 2], high: vec![1.0; 2] };
        let g = generate_snapshots(&sys, &init, 5, seed).unwrap();
        prop_assert_eq!(g.data.len(), 15);
        prop_assert_eq!(g.data.x_plus(), &(g.data.x() * a.transpose()));
        for t in 0..3 {
            for k in 0..4 {
                let r = 5 * t + k;
                prop_assert_eq!(g.data.x_plus().row(r), g.data.x().row(r + 1));
            }
        }
        prop_assert_eq!(g.data.y().unwrap(), g.data.x());
        let again = generate_snapshots(&sys, &init, 5, seed).unwrap();
        prop_assert_eq!(again.data, g.data);
    }
}
