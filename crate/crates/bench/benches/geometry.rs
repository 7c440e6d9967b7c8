use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sri_core::{ConvexSet, Point, RandomSource};

fn cones(c: &mut Criterion) {
    let d = 8;
    let sets = [
        (
            "box",
            ConvexSet::new_box(vec![-1.0; d], vec![1.0; d]).unwrap(),
        ),
        ("ball", ConvexSet::new_ball(Point::zeros(d), 1.0).unwrap()),
        ("simplex", ConvexSet::new_simplex(d, 1.0).unwrap()),
    ];
    let mut rng = RandomSource::new(1);
    for (name, set) in &sets {
        let y = rng.gaussian_point(d).scale(3.0);
        let x = set.sample_boundary(&mut rng);
        let v = rng.gaussian_point(d);
        c.bench_function(&format!("project {name}"), |b| {
            b.iter(|| set.project(black_box(&y)).unwrap())
        });
        c.bench_function(&format!("normal cone {name}"), |b| {
            b.iter(|| {
                set.normal_cone_project(black_box(&x), black_box(&v))
                    .unwrap()
            })
        });
    }
}

criterion_group!(benches, cones);
criterion_main!(benches);
