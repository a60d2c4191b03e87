//! Kneedle knee/elbow detection on a sampled curve.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

fn normalize(values: &[f64]) -> Option<Vec<f64>> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    (range > 0.0 && range.is_finite()).then(|| values.iter().map(|v| (v - min) / range).collect())
}

/// Indices `i` with `cmp(y[i], y[i±1])` for both neighbours, clamping at the ends.
fn extrema(y: &[f64], cmp: impl Fn(f64, f64) -> bool) -> Vec<usize> {
    let last = y.len() - 1;
    (0..y.len())
        .filter(|&i| cmp(y[i], y[i.saturating_sub(1)]) && cmp(y[i], y[(i + 1).min(last)]))
        .collect()
}

/// Knee of the curve `(xs, ys)` or `None` when no local maximum of the
/// difference curve survives its sensitivity-adjusted threshold.
pub fn kneedle(xs: &[f64], ys: &[f64], sensitivity: f64, curve: Curve, direction: Direction) -> Option<f64> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let x_norm = normalize(xs)?;
    let mut y_norm = normalize(ys)?;

    // turn every shape into a concave increasing knee
    match (direction, curve) {
        (Direction::Decreasing, Curve::Concave) => y_norm.reverse(),
        (Direction::Decreasing, Curve::Convex) => y_norm.iter_mut().for_each(|y| *y = 1.0 - *y),
        (Direction::Increasing, Curve::Convex) => {
            y_norm.iter_mut().for_each(|y| *y = 1.0 - *y);
            y_norm.reverse();
        }
        (Direction::Increasing, Curve::Concave) => {}
    }
    let diff: Vec<f64> = y_norm.iter().zip(&x_norm).map(|(y, x)| y - x).collect();

    let maxima = extrema(&diff, |a, b| a >= b);
    let minima = extrema(&diff, |a, b| a <= b);
    let first_max = *maxima.first()?;
    let mean_step = (x_norm[n - 1] - x_norm[0]).abs() / (n - 1) as f64;

    let mut threshold = 0.0;
    let mut threshold_index = first_max;
    let mut active = true;
    for i in first_max..n - 1 {
        if maxima.contains(&i) {
            threshold = diff[i] - sensitivity * mean_step;
            threshold_index = i;
            active = true;
        }
        if minima.contains(&i) {
            threshold = 0.0;
            active = false;
        }
        if active && diff[i + 1] < threshold {
            let index = match (curve, direction) {
                (Curve::Convex, Direction::Decreasing) | (Curve::Concave, Direction::Increasing) => threshold_index,
                _ => n - 1 - threshold_index,
            };
            return Some(xs[index]);
        }
    }
    None
}

/// Elbow of a decreasing convex curve such as SSE against the number of clusters.
pub fn elbow(xs: &[f64], ys: &[f64], sensitivity: f64) -> Option<f64> {
    kneedle(xs, ys, sensitivity, Curve::Convex, Direction::Decreasing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_distance_to_chord(xs: &[f64], ys: &[f64]) -> f64 {
        // Independent elbow oracle: farthest point from the line joining the
        // normalised end points.
        let xn = normalize(xs).unwrap();
        let yn = normalize(ys).unwrap();
        let (x0, y0, x1, y1) = (xn[0], yn[0], xn[xn.len() - 1], yn[yn.len() - 1]);
        let mut best = (0.0, xs[0]);
        for i in 0..xs.len() {
            let d = ((y1 - y0) * xn[i] - (x1 - x0) * yn[i] + x1 * y0 - y1 * x0).abs();
            if d > best.0 {
                best = (d, xs[i]);
            }
        }
        best.1
    }

    #[test]
    fn reciprocal_curve_knee_agrees_with_chord_oracle() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let knee = elbow(&xs, &ys, 1.0).unwrap();
        assert_eq!(knee, max_distance_to_chord(&xs, &ys));
        assert_eq!(knee, 3.0);
    }

    #[test]
    fn linear_and_flat_curves_have_no_knee() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let linear: Vec<f64> = xs.iter().map(|x| 20.0 - 2.0 * x).collect();
        assert_eq!(elbow(&xs, &linear, 1.0), None);
        assert_eq!(elbow(&xs, &[3.0; 10], 1.0), None);
        assert_eq!(elbow(&xs[..2], &linear[..2], 1.0), None);
    }

    #[test]
    fn piecewise_linear_elbow() {
        let xs: Vec<f64> = (7..=20).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&k| if k <= 10.0 { 100.0 - 25.0 * (k - 7.0) } else { 25.0 - (k - 10.0) })
            .collect();
        assert_eq!(elbow(&xs, &ys, 1.0), Some(10.0));
    }

    #[test]
    fn other_orientations() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let concave_inc: Vec<f64> = xs.iter().map(|x| 1.0 - 1.0 / x).collect();
        assert_eq!(kneedle(&xs, &concave_inc, 1.0, Curve::Concave, Direction::Increasing), Some(3.0));
        let convex_inc: Vec<f64> = xs.iter().map(|x| 1.0 / (11.0 - x)).collect();
        assert_eq!(kneedle(&xs, &convex_inc, 1.0, Curve::Convex, Direction::Increasing), Some(8.0));
    }
}
