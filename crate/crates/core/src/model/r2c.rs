//! Regression-to-classification: turn per-class remaining times into a
//! minute-by-minute label sequence.

/// `remaining[c]` is the predicted time in minutes until class `c` next
/// occurs, with the last entry for EOS. Classes other than `current` with a
/// time below `horizon` get the occurrence bin `clamp(round(r), 1, horizon)`.
/// Bins are visited in ascending order, lower class index first on ties; each
/// class fills from its bin until the next class starts, and nothing follows
/// EOS.
pub fn r2c(remaining: &[f64], current: usize, horizon: usize) -> Vec<usize> {
    let eos = remaining.len().saturating_sub(1);
    let mut events: Vec<(usize, usize)> = remaining
        .iter()
        .enumerate()
        .filter(|&(c, &r)| c != current && r < horizon as f64)
        .map(|(c, &r)| ((r.round() as usize).clamp(1, horizon), c))
        .collect();
    events.sort_unstable();
    let mut out = vec![current; horizon];
    let mut last_bin = 0;
    for (bin, class) in events {
        if bin == last_bin {
            continue;
        }
        out[bin - 1..].fill(class);
        last_bin = bin;
        if class == eos {
            break;
        }
    }
    out
}
