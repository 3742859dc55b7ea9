use crate::error::{Error, Result};
use crate::ucb::{effective_dimension_from_gram, gram};

/// What a finished run keeps for the log-det check.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub lambda: f64,
    pub logdet_ratio: f64,
    /// `g(x_t; theta_0) / sqrt(m)` of every played context, when stored.
    pub init_features: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogdetReport {
    pub logdet_ratio: f64,
    pub d_bar: f64,
    /// `d_bar log(1 + T / lambda) + 1`.
    pub bound_rhs: f64,
}

impl LogdetReport {
    pub fn holds(&self) -> bool {
        self.logdet_ratio <= self.bound_rhs
    }
}

/// Both sides of `logdet_ratio <= d_bar log(1 + T/lambda) + 1`. Report only.
pub fn logdet_report(run: &RunArtifacts) -> Result<LogdetReport> {
    let features = run.init_features.as_ref().ok_or(Error::MissingGradients)?;
    if features.is_empty() {
        return Ok(LogdetReport {
            logdet_ratio: run.logdet_ratio,
            d_bar: 0.0,
            bound_rhs: 1.0,
        });
    }
    let t = features.len() as f64;
    let d_bar = effective_dimension_from_gram(&gram(features), run.lambda)?;
    Ok(LogdetReport {
        logdet_ratio: run.logdet_ratio,
        d_bar,
        bound_rhs: d_bar * (t / run.lambda).ln_1p() + 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_is_trivially_satisfied() {
        let r = logdet_report(&RunArtifacts {
            lambda: 1.0,
            logdet_ratio: 0.0,
            init_features: Some(vec![]),
        })
        .unwrap();
        assert_eq!(r.logdet_ratio, 0.0);
        assert!(r.holds());
    }

    #[test]
    fn missing_features_is_an_error() {
        let run = RunArtifacts {
            lambda: 1.0,
            logdet_ratio: 0.0,
            init_features: None,
        };
        assert!(matches!(logdet_report(&run), Err(Error::MissingGradients)));
    }

    #[test]
    fn single_round_closed_form() {
        let u = vec![0.6, 0.8, 1.0];
        let lambda = 2.0;
        let r = logdet_report(&RunArtifacts {
            lambda,
            logdet_ratio: (2.0f64 / lambda).ln_1p(),
            init_features: Some(vec![u]),
        })
        .unwrap();
        // d_bar = log(1 + 2/2) / log(1 + 1/2)
        let d_bar = 2f64.ln() / 1.5f64.ln();
        assert!((r.d_bar - d_bar).abs() < 1e-14);
        assert!((r.bound_rhs - (2f64.ln() + 1.0)).abs() < 1e-14);
        assert!(r.holds());
    }
}
