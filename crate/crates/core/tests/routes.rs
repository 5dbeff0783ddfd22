use meshfd_core::solve::FnRhs;
use meshfd_core::{
    assemble, build_sigma, build_space, generate_grid, generate_scattered, solve_least_squares, solve_square, Bounds,
    Centers, GlobalSystem, LsqOptions, Operator, OverlapSplineSpace, PointSource, Route, Selector, SigmaStrategy,
    SpaceSpec,
};

/// Interpolatory spaces on seeded scattered clouds, skipping seeds whose sets are not I-sets.
fn scattered_spaces(spec: &SpaceSpec, k: usize, want: usize) -> Vec<OverlapSplineSpace> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < want {
        let count = 80 + 25 * (seed as usize % 10);
        let nodes = generate_scattered(2, count, &Bounds::unit(2), PointSource::SeededRandom { seed }).unwrap();
        assert!(nodes.len() <= 400);
        let space = build_space(nodes, &Centers::InteriorNodes, &Selector::Knn { k }, spec).unwrap();
        if space.is_interpolatory() {
            out.push(space);
        }
        seed += 1;
        assert!(seed < 100);
    }
    out
}

fn rhs() -> FnRhs<impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64]) -> f64 + Sync> {
    FnRhs {
        interior: |y: &[f64]| (y[0] * 3.0).sin() + y[1],
        boundary: |y: &[f64]| y[0] * y[1],
    }
}

fn both_routes(space: &OverlapSplineSpace) -> (GlobalSystem, GlobalSystem) {
    let op = Operator::laplacian();
    let sm = build_sigma(space, SigmaStrategy::SameIndex, None).unwrap();
    let a = assemble(space, &op, &rhs(), &sm, Route::Lagrange).unwrap();
    let b = assemble(space, &op, &rhs(), &sm, Route::Exactness).unwrap();
    (a, b)
}

/// Entrywise difference scaled by the largest magnitude in each row.
fn max_row_relative_difference(a: &GlobalSystem, b: &GlobalSystem) -> f64 {
    let (da, db) = (a.matrix.to_dense(), b.matrix.to_dense());
    let mut worst: f64 = 0.0;
    for r in 0..da.nrows() {
        let scale = da.row(r).amax().max(db.row(r).amax());
        worst = worst.max((da.row(r) - db.row(r)).amax() / scale);
    }
    worst
}

#[test]
fn lagrange_and_exactness_routes_agree() {
    let specs = [
        (
            SpaceSpec::Poly {
                degree: 2,
                sublist: None,
            },
            6,
        ),
        (
            SpaceSpec::Polyharmonic {
                exponent: 3.0,
                augmentation_degree: Some(1),
            },
            9,
        ),
        (
            SpaceSpec::Gauss {
                shape: 4.0,
                augmentation_degree: None,
            },
            7,
        ),
    ];
    for (spec, k) in &specs {
        for space in scattered_spaces(spec, *k, 10) {
            let (a, b) = both_routes(&space);
            assert_eq!(a.rhs, b.rhs);
            let d = max_row_relative_difference(&a, &b);
            assert!(d <= 1e-10, "{spec:?}: {d:e}");
        }
    }
}

#[test]
fn lsq_equals_collocation_for_square_systems() {
    let spec = SpaceSpec::Polyharmonic {
        exponent: 3.0,
        augmentation_degree: Some(2),
    };
    for space in scattered_spaces(&spec, 12, 5) {
        let (_, sys) = both_routes(&space);
        let u = solve_square(&sys).unwrap();
        let v = solve_least_squares(&sys, LsqOptions::default()).unwrap();
        assert!(v.rank.full_rank);
        let scale = u.nodal_values.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for (a, b) in u.nodal_values.iter().zip(&v.nodal_values) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn aggregate_systems_have_full_column_rank() {
    let spec = SpaceSpec::Polyharmonic {
        exponent: 3.0,
        augmentation_degree: Some(2),
    };
    for space in scattered_spaces(&spec, 12, 10) {
        let sm = build_sigma(&space, SigmaStrategy::PerSetAggregate, None).unwrap();
        let sys = assemble(&space, &Operator::laplacian(), &rhs(), &sm, Route::Exactness).unwrap();
        assert!(sys.nrows() > sys.ncols());
        let sol = solve_least_squares(&sys, LsqOptions::default()).unwrap();
        assert!(sol.rank.full_rank, "condition {:e}", sol.rank.condition_estimate);
        assert!(sol.normal_residual.unwrap() <= 1e-7 * sys.matrix.frobenius_norm() * norm(&sys.rhs));
    }
}

#[test]
fn nearest_node_duplicates_get_distinct_patches() {
    let nodes = generate_grid(2, 9, &Bounds::unit(2)).unwrap();
    let space = build_space(
        nodes.clone(),
        &Centers::AllNodes,
        &Selector::Knn { k: 6 },
        &SpaceSpec::Poly {
            degree: 1,
            sublist: None,
        },
    )
    .unwrap();
    let mut ys: Vec<Vec<f64>> = nodes.points().map(<[f64]>::to_vec).collect();
    for j in (0..nodes.len()).step_by(3) {
        ys.push(nodes.point(j).to_vec());
        ys.push(nodes.point(j).to_vec());
    }
    ys.push(vec![0.31, 0.62]);
    ys.push(vec![0.31, 0.62]);
    let sm = build_sigma(&space, SigmaStrategy::NearestNode, Some(&ys)).unwrap();
    assert!(sm.duplicates_are_distinct());
    let sys = assemble(&space, &Operator::laplacian(), &rhs(), &sm, Route::Exactness).unwrap();
    assert_eq!(sys.nrows(), ys.len());
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
