//! Ribbon plots: current time along x, anticipated minute along y, with the
//! ground-truth phase strip underneath.

use std::fmt::Write;

use swag_core::data::{Video, SECONDS_PER_MINUTE};
use swag_core::metrics::Anticipator;
use swag_core::{Result, SwagError};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#393b79",
];
pub const EOS_COLOR: &str = "#9e9e9e";

/// Fixed color per class; end-of-surgery is grey.
pub fn class_color(class: usize, num_phases: usize) -> &'static str {
    if class >= num_phases {
        EOS_COLOR
    } else {
        PALETTE[class % PALETTE.len()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ribbon {
    pub video_id: String,
    pub num_phases: usize,
    pub horizon: usize,
    /// Evaluated seconds.
    pub times: Vec<usize>,
    pub recognized: Vec<usize>,
    pub truth: Vec<usize>,
    /// `times.len() × horizon` predicted labels.
    pub predicted: Vec<Vec<usize>>,
}

/// Predictions at every `interval` seconds from minute `from` to minute `to`
/// (inclusive, clipped to the video).
pub fn build_ribbon(
    method: &dyn Anticipator,
    video: &Video,
    num_phases: usize,
    from: usize,
    to: Option<usize>,
    interval: usize,
) -> Result<Ribbon> {
    let start = from * SECONDS_PER_MINUTE;
    let end = to.map_or(video.len(), |m| (m * SECONDS_PER_MINUTE + 1).min(video.len()));
    if start >= end || interval == 0 {
        return Err(SwagError::Domain(format!(
            "empty ribbon range {from}..{to:?} minutes for {} ({} s)",
            video.id(),
            video.len()
        )));
    }
    let times: Vec<usize> = (start..end).step_by(interval).collect();
    let mut ribbon = Ribbon {
        video_id: video.id().to_string(),
        num_phases,
        horizon: method.horizon(),
        times: times.clone(),
        recognized: Vec::with_capacity(times.len()),
        truth: Vec::with_capacity(times.len()),
        predicted: Vec::with_capacity(times.len()),
    };
    for &t in &times {
        let p = method.predict(video, t)?;
        ribbon.recognized.push(p.current);
        ribbon.truth.push(video.labels.at(t).0);
        ribbon.predicted.push(p.future);
    }
    Ok(ribbon)
}

impl Ribbon {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("second,recognized,truth");
        for n in 1..=self.horizon {
            write!(s, ",m{n}").expect("string write");
        }
        s.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            write!(s, "{t},{},{}", self.recognized[i], self.truth[i]).expect("string write");
            for c in &self.predicted[i] {
                write!(s, ",{c}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_svg(&self) -> String {
        const CELL: usize = 8;
        const LEFT: usize = 40;
        const TOP: usize = 20;
        const GAP: usize = 6;
        let cols = self.times.len();
        let width = LEFT + cols * CELL + 10;
        let grid_h = self.horizon * CELL;
        let strip_y = TOP + grid_h + GAP;
        let legend_y = strip_y + 2 * CELL + 24;
        let height = legend_y + 16;
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
        )
        .expect("string write");
        writeln!(s, r#"<text x="{LEFT}" y="12">{} predicted phases</text>"#, self.video_id).expect("string write");
        writeln!(s, r#"<text x="2" y="{}">+{}m</text>"#, TOP + 8, self.horizon).expect("string write");
        writeln!(s, r#"<text x="2" y="{}">+1m</text>"#, TOP + grid_h).expect("string write");
        for (i, row) in self.predicted.iter().enumerate() {
            for (n, &c) in row.iter().enumerate() {
                // Minute 1 sits at the bottom, next to the truth strip.
                let y = TOP + (self.horizon - 1 - n) * CELL;
                writeln!(
                    s,
                    r#"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                    LEFT + i * CELL,
                    class_color(c, self.num_phases)
                )
                .expect("string write");
            }
        }
        writeln!(s, r#"<text x="2" y="{}">truth</text>"#, strip_y + CELL + 4).expect("string write");
        for (i, &c) in self.truth.iter().enumerate() {
            writeln!(
                s,
                r#"<rect x="{}" y="{strip_y}" width="{CELL}" height="{}" fill="{}"/>"#,
                LEFT + i * CELL,
                2 * CELL,
                class_color(c, self.num_phases)
            )
            .expect("string write");
        }
        let first = self.times.first().copied().unwrap_or(0) / SECONDS_PER_MINUTE;
        let last = self.times.last().copied().unwrap_or(0) / SECONDS_PER_MINUTE;
        writeln!(s, r#"<text x="{LEFT}" y="{}">{first} min</text>"#, strip_y + 2 * CELL + 12).expect("string write");
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{last} min</text>"#,
            LEFT + cols * CELL,
            strip_y + 2 * CELL + 12
        )
        .expect("string write");
        for c in 0..=self.num_phases {
            let x = LEFT + c * 44;
            let name = if c == self.num_phases { "EOS".to_string() } else { format!("P{c}") };
            writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{CELL}" height="{CELL}" fill="{}"/><text x="{}" y="{}">{name}</text>"#,
                legend_y,
                class_color(c, self.num_phases),
                x + CELL + 3,
                legend_y + CELL
            )
            .expect("string write");
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swag_core::metrics::GroundTruthOracle;
    use swag_core::simulate::{build_dataset, FeatureModel, SplitCounts, WorkflowGrammar};

    fn video() -> Video {
        build_dataset(
            &WorkflowGrammar::structured(),
            &FeatureModel::random(7, 2, 0.1, 1),
            SplitCounts::new(1, 1, 1),
            2,
        )
        .unwrap()
        .test
        .remove(0)
    }

    #[test]
    fn matrix_is_minutes_by_horizon() {
        let v = video();
        let r = build_ribbon(&GroundTruthOracle { horizon: 5 }, &v, 7, 2, Some(11), 60).unwrap();
        assert_eq!(r.predicted.len(), 10);
        assert!(r.predicted.iter().all(|row| row.len() == 5));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("second,recognized,truth,m1,m2,m3,m4,m5\n120,"));
        let svg = r.to_svg();
        assert_eq!(svg.matches("<rect").count(), 10 * 5 + 10 + 8);
        assert!(build_ribbon(&GroundTruthOracle { horizon: 5 }, &v, 7, 10_000, None, 60).is_err());
    }

    #[test]
    fn colors_are_fixed_and_eos_is_grey() {
        assert_eq!(class_color(7, 7), EOS_COLOR);
        assert_eq!(class_color(0, 7), class_color(0, 7));
        let distinct: std::collections::BTreeSet<_> = (0..8).map(|c| class_color(c, 7)).collect();
        assert_eq!(distinct.len(), 8);
        let v = video();
        let a = build_ribbon(&GroundTruthOracle { horizon: 3 }, &v, 7, 0, None, 60).unwrap();
        assert_eq!(a.to_svg(), a.clone().to_svg());
    }
}
