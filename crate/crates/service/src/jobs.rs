//! Background jobs (t-SNE layouts, training) on a fixed-size worker pool.
//!
//! Workers run at lowered scheduling priority inside their own rayon pool so
//! that interactive queries keep the global pool and most of the CPU.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;

use embex_core::trainer::{TrainProgress, TrainStatus};
use embex_core::tsne::{KlPoint, TsneProgress};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Tsne,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

/// Live progress source of a job.
#[derive(Debug, Clone)]
pub enum Progress {
    Tsne { tracker: Arc<TsneProgress>, n_iter: usize },
    Train(Arc<TrainProgress>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgressSnapshot {
    Tsne {
        iteration: usize,
        n_iter: usize,
        kl_history: Vec<KlPoint>,
    },
    Train(TrainStatus),
}

impl Progress {
    fn snapshot(&self) -> ProgressSnapshot {
        match self {
            Progress::Tsne { tracker, n_iter } => ProgressSnapshot::Tsne {
                iteration: tracker.iteration(),
                n_iter: *n_iter,
                kl_history: tracker.history(),
            },
            Progress::Train(p) => ProgressSnapshot::Train(p.status()),
        }
    }
}

/// Public view of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: ProgressSnapshot,
    /// Where the result can be fetched once the job is done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
struct Record {
    kind: JobKind,
    state: JobState,
    progress: Progress,
    result: Option<Arc<Value>>,
    error: Option<String>,
}

type Task = Box<dyn FnOnce() + Send + 'static>;

/// Job table plus the worker threads that drain the queue.
pub struct JobPool {
    records: Arc<RwLock<HashMap<String, Record>>>,
    queue: Mutex<Sender<Task>>,
    next_id: AtomicU64,
    workers: usize,
}

impl std::fmt::Debug for JobPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobPool").field("workers", &self.workers).finish()
    }
}

#[cfg(target_os = "linux")]
fn lower_priority() {
    // SAFETY: plain syscalls on the calling thread's own id.
    unsafe {
        let tid = libc::gettid();
        libc::setpriority(libc::PRIO_PROCESS, tid as libc::id_t, 10);
    }
}

#[cfg(not(target_os = "linux"))]
fn lower_priority() {}

impl JobPool {
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        let (tx, rx) = mpsc::channel::<Task>();
        let rx = Arc::new(Mutex::new(rx));
        let compute = Arc::new(
            rayon::ThreadPoolBuilder::new()
                .thread_name(|i| format!("embex-job-compute-{i}"))
                .start_handler(|_| lower_priority())
                .build()
                .expect("job thread pool"),
        );
        for i in 0..workers {
            let rx: Arc<Mutex<Receiver<Task>>> = Arc::clone(&rx);
            let compute = Arc::clone(&compute);
            thread::Builder::new()
                .name(format!("embex-job-{i}"))
                .spawn(move || {
                    lower_priority();
                    loop {
                        let task = rx.lock().unwrap().recv();
                        match task {
                            Ok(task) => compute.install(task),
                            Err(_) => break,
                        }
                    }
                })
                .expect("job worker thread");
        }
        JobPool {
            records: Arc::new(RwLock::new(HashMap::new())),
            queue: Mutex::new(tx),
            next_id: AtomicU64::new(1),
            workers,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Queues `work`; its `Ok` value becomes the job result.
    pub fn submit<F>(&self, kind: JobKind, progress: Progress, work: F) -> JobHandle
    where
        F: FnOnce() -> Result<Value, String> + Send + 'static,
    {
        let id = format!("job-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.records.write().unwrap().insert(
            id.clone(),
            Record {
                kind,
                state: JobState::Pending,
                progress,
                result: None,
                error: None,
            },
        );
        let records = Arc::clone(&self.records);
        let job_id = id.clone();
        let task: Task = Box::new(move || {
            set_state(&records, &job_id, JobState::Running);
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(work))
                .unwrap_or_else(|_| Err("job panicked".to_string()));
            let mut map = records.write().unwrap();
            if let Some(r) = map.get_mut(&job_id) {
                match outcome {
                    Ok(v) => {
                        r.result = Some(Arc::new(v));
                        r.state = JobState::Done;
                    }
                    Err(e) => {
                        log::warn!("{job_id} failed: {e}");
                        r.error = Some(e);
                        r.state = JobState::Failed;
                    }
                }
            }
        });
        self.queue
            .lock()
            .unwrap()
            .send(task)
            .expect("job workers are alive");
        self.handle(&id).expect("just inserted")
    }

    pub fn handle(&self, id: &str) -> Option<JobHandle> {
        self.records.read().unwrap().get(id).map(|r| JobHandle {
            id: id.to_string(),
            kind: r.kind,
            state: r.state,
            progress: r.progress.snapshot(),
            result_ref: (r.state == JobState::Done).then(|| format!("/jobs/{id}/result")),
            error: r.error.clone(),
        })
    }

    /// The stored result of a finished job.
    pub fn result(&self, id: &str) -> Option<(JobState, Option<Arc<Value>>, Option<String>)> {
        self.records
            .read()
            .unwrap()
            .get(id)
            .map(|r| (r.state, r.result.clone(), r.error.clone()))
    }

    /// Asks a pending or running job to stop; it then ends as failed.
    pub fn cancel(&self, id: &str) -> Option<JobHandle> {
        if let Some(r) = self.records.read().unwrap().get(id) {
            if r.state < JobState::Done {
                match &r.progress {
                    Progress::Tsne { tracker, .. } => tracker.cancel(),
                    Progress::Train(p) => p.cancel(),
                }
            }
        }
        self.handle(id)
    }

    pub fn list(&self) -> Vec<JobHandle> {
        let ids: Vec<String> = self.records.read().unwrap().keys().cloned().collect();
        let mut out: Vec<JobHandle> = ids.iter().filter_map(|id| self.handle(id)).collect();
        out.sort_by_key(|h| h.id.trim_start_matches("job-").parse::<u64>().unwrap_or(u64::MAX));
        out
    }
}

fn set_state(records: &RwLock<HashMap<String, Record>>, id: &str, state: JobState) {
    if let Some(r) = records.write().unwrap().get_mut(id) {
        if state > r.state {
            r.state = state;
        }
    }
}
