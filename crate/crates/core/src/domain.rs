//! Bounded integer domains: the finite stand-in for universal quantification
//! over weak integer fields and method arguments.

use crate::ast::Program;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_LO: i64 = -8;
pub const DEFAULT_HI: i64 = 8;

/// A base range plus extra points seeded from program literals, where
/// invariant boundaries live. Each literal contributes itself and its
/// negation, both widened by ±1: subtraction-heavy arithmetic puts
/// counterexamples on either side of zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedDomain {
    pub lo: i64,
    pub hi: i64,
    pub extras: BTreeSet<i64>,
    points: Vec<i64>,
    /// Same points ordered by absolute value: quantifier counterexamples
    /// cluster near invariant boundaries, so scanning small magnitudes first
    /// exits earlier.
    #[serde(skip)]
    scan_order: Vec<i64>,
}

impl BoundedDomain {
    pub fn new(lo: i64, hi: i64, literals: impl IntoIterator<Item = i64>) -> BoundedDomain {
        assert!(lo <= hi, "empty base range");
        let mut extras = BTreeSet::new();
        for l in literals {
            for c in [l, l.checked_neg().unwrap_or(i64::MAX)] {
                extras.insert(c.saturating_sub(1));
                extras.insert(c);
                extras.insert(c.saturating_add(1));
            }
        }
        let mut points: BTreeSet<i64> = (lo..=hi).collect();
        points.extend(extras.iter().copied());
        let points: Vec<i64> = points.into_iter().collect();
        let mut scan_order = points.clone();
        scan_order.sort_by_key(|v| (v.unsigned_abs(), *v));
        BoundedDomain { lo, hi, extras, points, scan_order }
    }

    /// Domain for a program: base range plus every integer literal in it.
    pub fn from_program(prog: &Program, lo: i64, hi: i64) -> BoundedDomain {
        BoundedDomain::new(lo, hi, prog.int_literals())
    }

    /// Base range from the `ANT_BOUND` environment variable (`lo:hi`),
    /// falling back to the default.
    pub fn base_from_env() -> (i64, i64) {
        if let Ok(s) = std::env::var("ANT_BOUND") {
            if let Some((lo, hi)) = s.split_once(':') {
                if let (Ok(lo), Ok(hi)) = (lo.trim().parse(), hi.trim().parse()) {
                    if lo <= hi {
                        return (lo, hi);
                    }
                }
            }
        }
        (DEFAULT_LO, DEFAULT_HI)
    }

    pub fn for_program(prog: &Program) -> BoundedDomain {
        let (lo, hi) = Self::base_from_env();
        BoundedDomain::from_program(prog, lo, hi)
    }

    /// Sorted, deduplicated enumeration of the domain.
    pub fn points(&self) -> &[i64] {
        &self.points
    }

    /// Enumeration ordered for early quantifier exits (absolute value
    /// ascending). Falls back to the sorted points after deserialization.
    pub fn scan_points(&self) -> &[i64] {
        if self.scan_order.len() == self.points.len() {
            &self.scan_order
        } else {
            &self.points
        }
    }

    /// Restore the scan order after deserialization.
    pub fn rebuild_scan(&mut self) {
        let mut scan_order = self.points.clone();
        scan_order.sort_by_key(|v| (v.unsigned_abs(), *v));
        self.scan_order = scan_order;
    }
}
