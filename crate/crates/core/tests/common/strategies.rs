//! Random models for property tests.

use bmapinf::{ArrivalStream, BatchSizeDistribution, MbmapModel, PhaseMatrix, ValidatedModel};
use proptest::prelude::*;

/// Probability vector on `1..=len` with every entry positive.
pub fn pmf(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1..=max_len).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

pub fn batch() -> BoxedStrategy<BatchSizeDistribution> {
    prop_oneof![
        pmf(6).prop_map(|p| BatchSizeDistribution::finite(p).unwrap()),
        (0.2f64..0.9).prop_map(|p| BatchSizeDistribution::geometric(p).unwrap()),
        (2.2f64..4.0).prop_map(|a| BatchSizeDistribution::zeta(a).unwrap()),
        (2.5f64..5.0).prop_map(|b| BatchSizeDistribution::log_heavy(b).unwrap()),
    ]
    .boxed()
}

pub fn light_batch() -> BoxedStrategy<BatchSizeDistribution> {
    prop_oneof![
        pmf(4).prop_map(|p| BatchSizeDistribution::finite(p).unwrap()),
        (0.4f64..0.9).prop_map(|p| BatchSizeDistribution::geometric(p).unwrap()),
    ]
    .boxed()
}

/// `d x d` matrix with entries in `[0, hi)` and a positive diagonal-free
/// part so that the background chain is irreducible.
fn rates(d: usize, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..hi, d), d)
}

/// A valid model with `d` phases and one arrival stream per service rate.
pub fn model(
    max_d: usize,
    service_rates: Vec<f64>,
    batch: BoxedStrategy<BatchSizeDistribution>,
) -> impl Strategy<Value = ValidatedModel> {
    (1..=max_d).prop_flat_map(move |d| {
        let streams = service_rates
            .iter()
            .map(|&mu| (rates(d, 1.0), batch.clone(), Just(mu)))
            .collect::<Vec<_>>();
        (rates(d, 1.0), streams).prop_map(move |(off, streams)| {
            let streams: Vec<ArrivalStream> = streams
                .into_iter()
                .enumerate()
                .map(|(n, (mut a, b, mu))| {
                    // keep every row of every stream active
                    for (i, row) in a.iter_mut().enumerate() {
                        row[i] += 0.1;
                    }
                    ArrivalStream::new(format!("s{n}"), PhaseMatrix::from_rows(a).unwrap(), b, mu)
                })
                .collect();
            let mut d0 = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        // cycle edge plus random extras keeps D irreducible
                        d0[i][j] = off[i][j] + if j == (i + 1) % d { 0.2 } else { 0.0 };
                    }
                }
                let out: f64 = d0[i].iter().sum::<f64>()
                    + streams
                        .iter()
                        .map(|s| s.rate_matrix.row(i).iter().sum::<f64>())
                        .sum::<f64>();
                d0[i][i] = -out;
            }
            MbmapModel::new(PhaseMatrix::from_rows(d0).unwrap(), streams)
                .validate()
                .unwrap()
        })
    })
}
