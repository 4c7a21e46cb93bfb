//! Compare matrix, majority selection and bus multiplexer.

use crate::bus::{tx_equal, BusTransaction};

/// One cycle's voting outcome over all monitor ports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteResult {
    /// `matrix[p][q]`: inputs `p` and `q` compare equal. An absent input
    /// equals only other absent inputs.
    pub matrix: Vec<Vec<bool>>,
    /// Lowest considered port agreeing with at least M considered ports.
    pub selected: Option<usize>,
    /// What the multiplexer drives onto the safe bus. `None` when there is
    /// no majority, or when the majority is an idle cycle.
    pub forwarded: Option<BusTransaction>,
}

impl VoteResult {
    pub fn has_majority(&self) -> bool {
        self.selected.is_some()
    }

    /// True when every considered pair of inputs agrees.
    pub fn is_unanimous(&self, considered: &[bool]) -> bool {
        let n = self.matrix.len();
        (0..n).all(|p| !considered[p] || (0..n).all(|q| !considered[q] || self.matrix[p][q]))
    }

    /// Number of considered ports that agree with `port`, itself included.
    pub fn agreement(&self, port: usize, considered: &[bool]) -> usize {
        self.matrix[port].iter().zip(considered).filter(|(eq, c)| **eq && **c).count()
    }
}

fn inputs_equal(a: Option<&BusTransaction>, b: Option<&BusTransaction>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => tx_equal(a, b),
        (None, None) => true,
        _ => false,
    }
}

pub fn compare_matrix(inputs: &[Option<BusTransaction>]) -> Vec<Vec<bool>> {
    let n = inputs.len();
    let mut matrix = vec![vec![false; n]; n];
    for p in 0..n {
        matrix[p][p] = true;
        for q in (p + 1)..n {
            let eq = inputs_equal(inputs[p].as_ref(), inputs[q].as_ref());
            matrix[p][q] = eq;
            matrix[q][p] = eq;
        }
    }
    matrix
}

/// First considered port whose row agrees with at least `m_agree`
/// considered ports.
pub fn select_majority(matrix: &[Vec<bool>], considered: &[bool], m_agree: usize) -> Option<usize> {
    (0..matrix.len())
        .filter(|&p| considered[p])
        .find(|&p| matrix[p].iter().zip(considered).filter(|(eq, c)| **eq && **c).count() >= m_agree)
}

pub fn vote(inputs: &[Option<BusTransaction>], considered: &[bool], m_agree: usize) -> VoteResult {
    assert_eq!(inputs.len(), considered.len(), "one input per port");
    let matrix = compare_matrix(inputs);
    let selected = select_majority(&matrix, considered, m_agree);
    let forwarded = selected.and_then(|p| inputs[p].clone());
    VoteResult { matrix, selected, forwarded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Address;

    fn w(block: usize, data: u32) -> Option<BusTransaction> {
        Some(BusTransaction::write(block, 0, Address(0x40), data))
    }

    #[test]
    fn one_dissenter_is_outvoted() {
        let r = vote(&[w(0, 7), w(1, 7), w(2, 9)], &[true; 3], 2);
        assert_eq!(r.matrix, vec![vec![true, true, false], vec![true, true, false], vec![false, false, true]]);
        assert_eq!(r.selected, Some(0));
        assert_eq!(r.forwarded.unwrap().data, 7);
    }

    #[test]
    fn unanimity_selects_port_zero() {
        let r = vote(&[w(0, 7), w(1, 7), w(2, 7)], &[true; 3], 2);
        assert!(r.matrix.iter().flatten().all(|&b| b));
        assert_eq!(r.selected, Some(0));
        assert!(r.is_unanimous(&[true; 3]));
    }

    #[test]
    fn pairwise_distinct_means_idle_bus() {
        let r = vote(&[w(0, 1), w(1, 2), w(2, 3)], &[true; 3], 2);
        assert_eq!(r.selected, None);
        assert_eq!(r.forwarded, None);
        assert!(!r.has_majority());
    }

    #[test]
    fn majority_may_be_an_idle_cycle() {
        let r = vote(&[None, None, w(2, 3)], &[true; 3], 2);
        assert_eq!(r.selected, Some(0));
        assert_eq!(r.forwarded, None);
        assert!(r.has_majority());
    }

    #[test]
    fn comparison_mode_rejects_any_mismatch() {
        assert_eq!(vote(&[w(0, 1), w(1, 2)], &[true; 2], 2).selected, None);
        assert_eq!(vote(&[w(0, 1), None], &[true; 2], 2).selected, None);
        assert_eq!(vote(&[w(0, 1), w(1, 1)], &[true; 2], 2).selected, Some(0));
    }

    #[test]
    fn unconsidered_ports_do_not_vote() {
        // Port 0 is not enabled; ports 1 and 2 disagree with each other.
        let r = vote(&[w(0, 1), w(1, 1), w(2, 2)], &[false, true, true], 2);
        assert_eq!(r.selected, None);
        let r = vote(&[w(0, 5), w(1, 1), w(2, 1), w(3, 5)], &[false, true, true, true], 2);
        assert_eq!(r.selected, Some(1));
    }
}
