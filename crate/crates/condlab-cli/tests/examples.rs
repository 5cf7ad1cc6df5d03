// SPDX-License-Identifier: Apache-2.0

//! Every named example must verify all of its claims.

use condlab_cli::examples::{self, Status, NAMES};

#[test]
fn all_examples_pass() {
    let mut failed = Vec::new();
    for name in NAMES {
        let rows = examples::run(name).unwrap_or_else(|e| panic!("{name}: {e:#}"));
        assert!(!rows.is_empty(), "{name} has no claims");
        for r in rows.iter().filter(|r| r.status == Status::Fail) {
            failed.push(format!("{name}: {} (computed {}, expected {})", r.claim, r.computed, r.expected));
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}
