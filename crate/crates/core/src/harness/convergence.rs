//! Convergence: every user's mean rate over a window of consecutive
//! iterations lies inside `[T, T + B]`.

/// Whether the window of `window` iterations starting at 0-based index
/// `start` has every user's mean rate inside its band.
pub fn window_in_band(
    traces: &[Vec<f64>],
    targets: &[f64],
    bands: &[f64],
    start: usize,
    window: usize,
) -> bool {
    traces.iter().zip(targets).zip(bands).all(|((trace, t), b)| {
        let mean = trace[start..start + window].iter().sum::<f64>() / window as f64;
        mean >= *t && mean <= t + b
    })
}

/// First 1-based iteration `t*` whose window `[t*, t* + window)` satisfies
/// [`window_in_band`], or `None`. `traces` holds one rate trace per user.
pub fn detect_convergence(
    traces: &[Vec<f64>],
    targets: &[f64],
    bands: &[f64],
    window: usize,
) -> Option<usize> {
    assert!(window >= 1, "convergence window must be positive");
    let len = traces.iter().map(Vec::len).min()?;
    if len < window {
        return None;
    }
    (0..=len - window)
        .find(|&start| window_in_band(traces, targets, bands, start, window))
        .map(|start| start + 1)
}

/// Online form of [`detect_convergence`] for use inside an episode loop.
#[derive(Debug, Clone)]
pub struct ConvergenceTracker {
    targets: Vec<f64>,
    bands: Vec<f64>,
    window: usize,
}

impl ConvergenceTracker {
    pub fn new(targets: Vec<f64>, bands: Vec<f64>, window: usize) -> Self {
        assert!(window >= 1, "convergence window must be positive");
        Self {
            targets,
            bands,
            window,
        }
    }

    /// Checks the window ending at the latest iteration. Called after each
    /// step, the first hit is the earliest converging window.
    pub fn check(&self, traces: &[Vec<f64>]) -> Option<usize> {
        let len = traces.first()?.len();
        if len < self.window {
            return None;
        }
        let start = len - self.window;
        window_in_band(traces, &self.targets, &self.bands, start, self.window).then_some(start + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_inside_band() {
        let traces = vec![vec![20.5; 150]];
        assert_eq!(detect_convergence(&traces, &[20.0], &[1.0], 100), Some(1));
    }

    #[test]
    fn always_below() {
        let traces = vec![vec![19.0; 500]];
        assert_eq!(detect_convergence(&traces, &[20.0], &[1.0], 100), None);
    }

    #[test]
    fn entering_at_fifty() {
        let mut trace = vec![0.0; 49];
        trace.extend(vec![20.0; 200]);
        assert_eq!(detect_convergence(&[trace], &[20.0], &[1.0], 100), Some(50));
    }

    #[test]
    fn short_trace() {
        assert_eq!(detect_convergence(&[vec![20.0; 99]], &[20.0], &[1.0], 100), None);
        assert_eq!(detect_convergence(&[vec![20.0; 100]], &[20.0], &[1.0], 100), Some(1));
    }

    #[test]
    fn needs_all_users() {
        let traces = vec![vec![20.5; 120], vec![5.0; 120]];
        assert_eq!(detect_convergence(&traces, &[20.0, 12.0], &[1.0, 0.6], 100), None);
    }

    #[test]
    fn tracker_matches_batch() {
        let mut trace = vec![0.0; 30];
        trace.extend(vec![12.3; 150]);
        let tracker = ConvergenceTracker::new(vec![12.0], vec![0.6], 100);
        let mut hit = None;
        for t in 1..=trace.len() {
            if let Some(c) = tracker.check(&[trace[..t].to_vec()]) {
                hit = Some(c);
                break;
            }
        }
        assert_eq!(hit, detect_convergence(&[trace], &[12.0], &[0.6], 100));
        // window from iteration 29 holds two zeros: 98·12.3/100 = 12.054 is still in band
        assert_eq!(hit, Some(29));
    }
}
