use alloc::vec;

use crate::dataset::ResponseMatrix;
use crate::math::Matrix;

use super::TruthEstimate;

/// Per-question response frequencies; the argmax breaks ties toward the
/// lowest option index.
pub fn majority_vote(data: &ResponseMatrix) -> TruthEstimate {
    let k_count = data.num_options();
    let mut posterior = Matrix::zeros(data.num_questions(), k_count);
    let mut counts = vec![0usize; k_count];
    for j in 0..data.num_questions() {
        counts.fill(0);
        let responses = data.question_responses(j);
        for &t in responses {
            counts[data.triplets()[t].option] += 1;
        }
        let row = posterior.row_mut(j);
        if responses.is_empty() {
            row.fill(1.0 / k_count as f64);
            continue;
        }
        for (p, &c) in row.iter_mut().zip(&counts) {
            *p = c as f64 / responses.len() as f64;
        }
    }
    TruthEstimate::from_posterior(posterior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ResponseRecord;

    fn data(rows: &[(&str, &str, &str)]) -> ResponseMatrix {
        let recs: alloc::vec::Vec<_> = rows.iter().map(|&(w, q, o)| ResponseRecord::new(w, q, o)).collect();
        ResponseMatrix::from_records(&recs, None).unwrap()
    }

    #[test]
    fn strict_majority() {
        let d = data(&[("w1", "q", "A"), ("w2", "q", "A"), ("w3", "q", "B")]);
        let est = majority_vote(&d);
        assert_eq!(est.argmax, vec![0]);
        assert!((est.confidence(0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let d = data(&[("w1", "q", "A"), ("w2", "q", "B")]);
        assert_eq!(majority_vote(&d).argmax, vec![0]);
    }
}
