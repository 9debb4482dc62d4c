use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use icmsim_core::dgp::{self, GridCell};
use icmsim_core::linalg;
use icmsim_core::ml;
use icmsim_core::pls::{self, PlsConfig};
use icmsim_core::study::{self, Position};
use icmsim_core::{ConstructKind, ParamTable};

fn cell(k: usize) -> GridCell {
    GridCell { position: Position::Exogenous, n: 500, k, sigma: 0.3, homogeneous: true }
}

fn sample_cov(kind: ConstructKind, k: usize) -> nalgebra::DMatrix<f64> {
    let pop = dgp::build_population(&cell(k).with_kind(kind)).unwrap();
    linalg::sample_covariance(&dgp::draw_sample(&pop, 500, 1).unwrap()).unwrap()
}

fn implied_covariance(c: &mut Criterion) {
    for kind in ConstructKind::ALL {
        let spec = study::study_spec(Position::Exogenous, kind, 7).unwrap();
        let s = sample_cov(kind, 7);
        let t = ml::start_values(&ParamTable::from_spec(&spec).unwrap(), &s).unwrap();
        c.bench_function(&format!("implied_covariance/{kind}/K7"), |b| b.iter(|| black_box(&t).implied_covariance().unwrap()));
    }
}

fn ml_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_ml");
    g.sample_size(20);
    for kind in ConstructKind::ALL {
        for k in [3, 7] {
            let spec = study::study_spec(Position::Exogenous, kind, k).unwrap();
            let s = sample_cov(kind, k);
            g.bench_function(format!("{kind}/K{k}"), |b| b.iter(|| ml::fit_ml(&spec, black_box(&s), 500).unwrap()));
        }
    }
    g.finish();
}

fn pls_fit(c: &mut Criterion) {
    for kind in [ConstructKind::LatentVariable, ConstructKind::Composite] {
        let spec = study::study_spec(Position::Exogenous, kind, 7).unwrap();
        let cfg = PlsConfig::for_spec(&spec).unwrap();
        let s = sample_cov(kind, 7);
        c.bench_function(&format!("fit_pls/{kind}/K7"), |b| b.iter(|| pls::fit_pls(&spec, black_box(&s), &cfg).unwrap()));
    }
}

fn sampling(c: &mut Criterion) {
    for kind in ConstructKind::ALL {
        let pop = dgp::build_population(&cell(7).with_kind(kind)).unwrap();
        c.bench_function(&format!("draw_sample/{kind}/n500"), |b| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                dgp::draw_sample(&pop, 500, seed).unwrap()
            })
        });
    }
}

criterion_group!(benches, implied_covariance, ml_fit, pls_fit, sampling);
criterion_main!(benches);
