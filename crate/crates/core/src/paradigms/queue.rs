use serde::{Deserialize, Serialize};

/// A task waiting for the shared resource (downlink or server).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientQueueEntry {
    pub client: usize,
    pub iteration: usize,
    /// Lag of the client in this iteration.
    pub priority: f64,
    pub enqueue_time: f64,
}

/// Order in which queued tasks get the shared resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QueuePolicy {
    /// Earliest arrival first.
    Fcfs,
    /// Largest lag first.
    Priority,
    /// Nothing of an iteration is served until every client's task of that
    /// iteration has arrived; then by descending lag or by arrival.
    SyncBatch { lag_order: bool },
    /// One fixed rank per client, lower rank first.
    Static(Vec<usize>),
    /// Synchronous batches with a separate rank vector per iteration.
    SyncStatic(Vec<Vec<usize>>),
}

/// Ties are always broken by the lower client index.
#[derive(Debug)]
pub(crate) struct TaskQueue {
    policy: QueuePolicy,
    clients: usize,
    entries: Vec<GradientQueueEntry>,
    arrivals: Vec<usize>,
}

impl TaskQueue {
    pub fn new(policy: QueuePolicy, clients: usize, iterations: usize) -> Self {
        TaskQueue {
            policy,
            clients,
            entries: Vec::new(),
            arrivals: vec![0; iterations],
        }
    }

    pub fn push(&mut self, e: GradientQueueEntry) {
        self.arrivals[e.iteration] += 1;
        self.entries.push(e);
    }

    fn eligible(&self, e: &GradientQueueEntry) -> bool {
        match self.policy {
            QueuePolicy::SyncBatch { .. } | QueuePolicy::SyncStatic(_) => self.arrivals[e.iteration] == self.clients,
            _ => true,
        }
    }

    /// `true` when `a` must be served before `b`.
    fn before(&self, a: &GradientQueueEntry, b: &GradientQueueEntry) -> bool {
        let by_lag = || b.priority.total_cmp(&a.priority).then(a.client.cmp(&b.client));
        let by_time = || a.enqueue_time.total_cmp(&b.enqueue_time).then(a.client.cmp(&b.client));
        let ord = match &self.policy {
            QueuePolicy::Fcfs => by_time(),
            QueuePolicy::Priority => by_lag(),
            QueuePolicy::SyncBatch { lag_order } => a
                .iteration
                .cmp(&b.iteration)
                .then_with(|| if *lag_order { by_lag() } else { by_time() }),
            QueuePolicy::Static(rank) => rank[a.client].cmp(&rank[b.client]).then(a.client.cmp(&b.client)),
            QueuePolicy::SyncStatic(ranks) => a.iteration.cmp(&b.iteration).then_with(|| {
                let r = &ranks[a.iteration];
                r[a.client].cmp(&r[b.client]).then(a.client.cmp(&b.client))
            }),
        };
        ord.is_lt()
    }

    /// Removes and returns the next task to serve, if any is eligible.
    pub fn pop(&mut self) -> Option<GradientQueueEntry> {
        let mut best: Option<usize> = None;
        for (idx, e) in self.entries.iter().enumerate() {
            if !self.eligible(e) {
                continue;
            }
            if best.is_none_or(|b| self.before(e, &self.entries[b])) {
                best = Some(idx);
            }
        }
        best.map(|idx| self.entries.swap_remove(idx))
    }

    /// Whether `e` is at least as urgent as every eligible entry.
    #[cfg(test)]
    pub fn is_head(&self, e: &GradientQueueEntry) -> bool {
        self.entries.iter().filter(|x| self.eligible(x)).all(|x| !self.before(x, e))
    }
}
