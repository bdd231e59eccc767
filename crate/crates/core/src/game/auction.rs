//! First-price sealed-bid auction for exploration rights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geology::Belief;

use super::config::BidParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub winner: Option<usize>,
    /// USD MM; zero when unallocated.
    pub price_paid: f64,
    /// Agents whose bids were invalid and treated as deferrals.
    pub rejected: Vec<usize>,
}

/// Highest valid bid wins and pays its own bid. Ties are broken uniformly
/// at random. Negative or non-finite bids count as deferrals.
pub fn run_auction<R: Rng + ?Sized>(bids: &[(usize, f64)], rng: &mut R) -> AuctionOutcome {
    let mut rejected = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut leaders: Vec<usize> = Vec::new();
    for &(agent, bid) in bids {
        if !bid.is_finite() || bid < 0.0 {
            rejected.push(agent);
            continue;
        }
        if bid > best {
            best = bid;
            leaders.clear();
            leaders.push(agent);
        } else if bid == best {
            leaders.push(agent);
        }
    }
    let winner = match leaders.len() {
        0 => None,
        1 => Some(leaders[0]),
        n => Some(leaders[rng.random_range(0..n)]),
    };
    AuctionOutcome {
        winner,
        price_paid: if winner.is_some() { best } else { 0.0 },
        rejected,
    }
}

/// `beta * exp(mean - lambda var)` with `lambda = risk_aversion * premium`.
pub fn bid_amount(belief: &Belief, risk_premium: f64, params: &BidParams) -> f64 {
    params.beta * belief.certainty_equivalent(params.risk_aversion * risk_premium)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn single_bidder_pays_own_bid() {
        let out = run_auction(&[(3, 10.0)], &mut stream_rng(1, 4));
        assert_eq!(out.winner, Some(3));
        assert_eq!(out.price_paid, 10.0);
    }

    #[test]
    fn highest_bid_wins_first_price() {
        let out = run_auction(&[(0, 10.0), (1, 12.0)], &mut stream_rng(1, 4));
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.price_paid, 12.0);
    }

    #[test]
    fn empty_auction_is_unallocated() {
        let out = run_auction(&[], &mut stream_rng(1, 4));
        assert_eq!(out.winner, None);
        assert_eq!(out.price_paid, 0.0);
    }

    #[test]
    fn negative_bid_is_a_deferral() {
        let out = run_auction(&[(0, -5.0), (1, 2.0)], &mut stream_rng(1, 4));
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.rejected, vec![0]);
        let none = run_auction(&[(0, -5.0)], &mut stream_rng(1, 4));
        assert_eq!(none.winner, None);
    }

    #[test]
    fn ties_split_roughly_evenly() {
        let mut rng = stream_rng(5, 4);
        let mut wins = [0usize; 3];
        for _ in 0..3000 {
            let out = run_auction(&[(0, 7.0), (1, 7.0), (2, 7.0)], &mut rng);
            wins[out.winner.unwrap()] += 1;
        }
        for w in wins {
            assert!((850..1150).contains(&w), "{wins:?}");
        }
    }

    #[test]
    fn bid_shading_lowers_bids_for_riskier_firms() {
        let belief = Belief {
            mean_log: 5.0,
            var_log: 0.3,
        };
        let p = BidParams::default();
        let safe = bid_amount(&belief, 0.08, &p);
        let risky = bid_amount(&belief, 0.14, &p);
        assert!(risky < safe);
        let certain = Belief {
            mean_log: 5.0,
            var_log: 0.0,
        };
        assert!((bid_amount(&certain, 0.1, &p) - 0.35 * 5f64.exp()).abs() < 1e-9);
    }
}
