//! Plot data from the samples kept in a report.

use clap::ValueEnum;
use isospec::experiments::{ExperimentReport, SampleSet};
use isospec::metrics::{normal_quantile, semicircle_cdf_quantile, semicircle_density, Direction};
use isospec::{Error, Result};

use crate::output::{config_comment, csv_number};

/// Histogram range and bin count for `spectral_hist`.
pub const HIST_RANGE: (f64, f64) = (-2.5, 2.5);
pub const HIST_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Ecdf,
    Qq,
    SpectralHist,
}

impl PlotKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::Ecdf => "ecdf",
            PlotKind::Qq => "qq",
            PlotKind::SpectralHist => "spectral_hist",
        }
    }
}

fn first_sample(report: &ExperimentReport) -> Result<(&str, &SampleSet)> {
    report
        .samples
        .iter()
        .find(|(_, s)| !s.values.is_empty())
        .map(|(k, s)| (k.as_str(), s))
        .ok_or_else(|| Error::InvalidArgument("report holds no sample data (keep_samples off or nothing sampled)".into()))
}

fn sorted_first_column(s: &SampleSet) -> Result<Vec<f64>> {
    let mut v = s.column(0);
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN in sample data".into()));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// CSV body for `kind`: a config comment, a sample comment, a header, rows.
/// Vector samples use their first coordinate.
pub fn emit_plotdata(report: &ExperimentReport, kind: PlotKind) -> Result<String> {
    let (name, sample) = first_sample(report)?;
    let mut out = config_comment(report);
    out.push_str(&format!(
        "# sample: {name}, d = {}, column 0, seed = {}, stream_id = {}\n",
        sample.d, sample.provenance.seed, sample.provenance.stream_id
    ));
    let v = sorted_first_column(sample)?;
    let m = v.len() as f64;
    match kind {
        PlotKind::Ecdf => {
            out.push_str("x,ecdf\n");
            for (i, x) in v.iter().enumerate() {
                out.push_str(&format!("{},{}\n", csv_number(*x), csv_number((i + 1) as f64 / m)));
            }
        }
        PlotKind::Qq => {
            out.push_str("p,sample_quantile,normal_quantile\n");
            for (i, x) in v.iter().enumerate() {
                let p = (i as f64 + 0.5) / m;
                out.push_str(&format!("{},{},{}\n", csv_number(p), csv_number(*x), csv_number(normal_quantile(p))));
            }
        }
        PlotKind::SpectralHist => {
            let (lo, hi) = HIST_RANGE;
            let w = (hi - lo) / HIST_BINS as f64;
            let mut counts = vec![0usize; HIST_BINS];
            for &x in &v {
                if (lo..hi).contains(&x) {
                    counts[(((x - lo) / w) as usize).min(HIST_BINS - 1)] += 1;
                }
            }
            out.push_str("bin_left,bin_right,bin_center,empirical_density,semicircle_density,semicircle_mass\n");
            for (b, &c) in counts.iter().enumerate() {
                let left = lo + b as f64 * w;
                let right = left + w;
                let center = left + w / 2.0;
                // The distribution function is constant off [−2, 2].
                let cdf = |t: f64| semicircle_cdf_quantile(t.clamp(-2.0, 2.0), Direction::Cdf);
                let mass = cdf(right)? - cdf(left)?;
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    csv_number(left),
                    csv_number(right),
                    csv_number(center),
                    csv_number(c as f64 / (m * w)),
                    csv_number(semicircle_density(center)),
                    csv_number(mass)
                ));
            }
        }
    }
    Ok(out)
}
