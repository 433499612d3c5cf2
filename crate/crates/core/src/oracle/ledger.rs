use std::fmt;

/// Query totals for one phase or for a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryCounts {
    pub grad: u64,
    pub hess: u64,
    pub value: u64,
}

impl QueryCounts {
    pub fn since(&self, earlier: &QueryCounts) -> QueryCounts {
        QueryCounts {
            grad: self.grad - earlier.grad,
            hess: self.hess - earlier.hess,
            value: self.value - earlier.value,
        }
    }
}

/// Exact oracle counters. Every query is charged to the run total and to the
/// current phase, if one is open.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryLedger {
    totals: QueryCounts,
    phases: Vec<(String, QueryCounts)>,
    current: Option<usize>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grad_count(&self) -> u64 {
        self.totals.grad
    }

    pub fn hess_count(&self) -> u64 {
        self.totals.hess
    }

    pub fn value_count(&self) -> u64 {
        self.totals.value
    }

    pub fn totals(&self) -> QueryCounts {
        self.totals
    }

    /// Routes subsequent queries to `label`, reopening it if it already exists.
    pub fn enter_phase(&mut self, label: &str) {
        let idx = match self.phases.iter().position(|(l, _)| l == label) {
            Some(i) => i,
            None => {
                self.phases.push((label.to_string(), QueryCounts::default()));
                self.phases.len() - 1
            }
        };
        self.current = Some(idx);
    }

    pub fn leave_phase(&mut self) {
        self.current = None;
    }

    pub fn phase(&self, label: &str) -> Option<QueryCounts> {
        self.phases.iter().find(|(l, _)| l == label).map(|(_, c)| *c)
    }

    pub fn phases(&self) -> &[(String, QueryCounts)] {
        &self.phases
    }

    pub(crate) fn record_grad(&mut self) {
        self.totals.grad += 1;
        if let Some(i) = self.current {
            self.phases[i].1.grad += 1;
        }
    }

    /// Charges `n` gradient queries whose answers are already known.
    pub(crate) fn charge_replayed_grads(&mut self, n: u64) {
        self.totals.grad += n;
        if let Some(i) = self.current {
            self.phases[i].1.grad += n;
        }
    }

    pub(crate) fn record_hess(&mut self) {
        self.totals.hess += 1;
        if let Some(i) = self.current {
            self.phases[i].1.hess += 1;
        }
    }

    pub(crate) fn record_value(&mut self) {
        self.totals.value += 1;
        if let Some(i) = self.current {
            self.phases[i].1.value += 1;
        }
    }
}

impl fmt::Display for QueryLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grad={} hess={} value={}", self.totals.grad, self.totals.hess, self.totals.value)?;
        for (label, c) in &self.phases {
            write!(f, " [{label}: grad={} hess={}]", c.grad, c.hess)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_accumulate_alongside_totals() {
        let mut l = QueryLedger::new();
        l.record_grad();
        l.enter_phase("a");
        l.record_grad();
        l.record_hess();
        l.enter_phase("b");
        l.record_value();
        l.enter_phase("a");
        l.record_grad();
        assert_eq!(l.totals(), QueryCounts { grad: 3, hess: 1, value: 1 });
        assert_eq!(l.phase("a"), Some(QueryCounts { grad: 2, hess: 1, value: 0 }));
        assert_eq!(l.phase("b"), Some(QueryCounts { grad: 0, hess: 0, value: 1 }));
        assert_eq!(l.phases().len(), 2);
    }
}
