use std::path::PathBuf;

/// Files per worker, in the order each worker should read them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShardAssignment {
    pub workers: Vec<Vec<(PathBuf, u64)>>,
}

impl ShardAssignment {
    pub fn load(&self, worker: usize) -> u64 {
        self.workers
            .get(worker)
            .map_or(0, |files| files.iter().map(|(_, s)| s).sum())
    }

    pub fn makespan(&self) -> u64 {
        (0..self.workers.len()).map(|w| self.load(w)).max().unwrap_or(0)
    }

    pub fn files_for(&self, worker: usize) -> Vec<PathBuf> {
        self.workers
            .get(worker)
            .map(|f| f.iter().map(|(p, _)| p.clone()).collect())
            .unwrap_or_default()
    }
}

/// Longest-processing-time greedy: largest file first, each to the least
/// loaded worker (lowest id on ties). Equal sizes keep manifest order.
pub fn assign_shards(files: &[(PathBuf, u64)], k: usize) -> ShardAssignment {
    let k = k.max(1);
    let mut order: Vec<usize> = (0..files.len()).collect();
    order.sort_by(|&a, &b| files[b].1.cmp(&files[a].1).then(a.cmp(&b)));
    let mut workers = vec![Vec::new(); k];
    let mut loads = vec![0u64; k];
    for i in order {
        let w = (0..k).min_by_key(|&w| (loads[w], w)).unwrap();
        loads[w] += files[i].1;
        workers[w].push(files[i].clone());
    }
    ShardAssignment { workers }
}

/// Sizes the manifest files from the filesystem; unreadable files get 0.
pub fn sized_files(files: &[PathBuf]) -> Vec<(PathBuf, u64)> {
    files
        .iter()
        .map(|p| (p.clone(), std::fs::metadata(p).map_or(0, |m| m.len())))
        .collect()
}
