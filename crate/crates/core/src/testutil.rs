use crate::model::{BiomarkerKind, Dataset, Observation};

/// Binary W, binary S, every (a, w) cell populated.
pub(crate) fn saturated() -> Dataset<f64> {
    let mut obs = Vec::new();
    let cells: [(f64, bool, f64, bool, f64, usize); 12] = [
        (0.0, true, 1.0, true, 0.0, 3),
        (0.0, true, 1.0, false, 0.0, 5),
        (0.0, true, 0.0, false, 0.0, 4),
        (0.0, true, 0.0, true, 0.0, 1),
        (1.0, true, 1.0, true, 0.0, 2),
        (1.0, true, 1.0, false, 0.0, 7),
        (1.0, true, 0.0, false, 0.0, 3),
        (0.0, false, 0.0, false, 1.0, 6),
        (0.0, false, 0.0, false, 0.0, 4),
        (0.0, false, 0.0, true, 0.0, 3),
        (1.0, false, 0.0, false, 1.0, 3),
        (1.0, false, 0.0, true, 0.0, 2),
    ];
    for (w, a, s, y, sc, count) in cells {
        for _ in 0..count {
            obs.push(Observation::new(vec![w], a, Some(s), y, Some(sc)));
        }
    }
    Dataset::new(obs, BiomarkerKind::Discrete)
}
