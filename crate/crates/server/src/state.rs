//! Shared server state. Mutations take the engine lock on a blocking
//! thread; reads only touch the last published snapshot.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use ctt_core::codegraph::CodeGraph;
use ctt_core::coverage::CoverageReport;
use ctt_core::orchestrator::{ChangeSource, Engine, EngineNotice, Observation, SourceEvent, Suggestion};
use ctt_core::time::Timestamp;
use tokio::sync::broadcast;

use crate::error::ApiError;

/// Notices buffered per stream connection before it counts as lagging.
const STREAM_BUFFER: usize = 1024;

/// Read-only view of the engine as of the last mutation.
#[derive(Debug)]
pub struct Snapshot {
    pub graph: Arc<CodeGraph>,
    pub suggestions: Vec<Suggestion>,
    pub coverage: Option<CoverageReport>,
    pub model_calls: usize,
    pub now: Timestamp,
    pub edit_window_ms: i64,
}

impl Snapshot {
    fn of(engine: &Engine) -> Self {
        Snapshot {
            graph: engine.graph(),
            suggestions: engine.suggestions().iter().cloned().collect(),
            coverage: engine.coverage().ok(),
            model_calls: engine.model_calls(),
            now: engine.clock().now(),
            edit_window_ms: engine.config().edit_window_ms(),
        }
    }
}

struct Inner {
    engine: Mutex<Engine>,
    snapshot: RwLock<Arc<Snapshot>>,
    outbox: Arc<Mutex<Vec<EngineNotice>>>,
    events: broadcast::Sender<EngineNotice>,
    token: Option<String>,
}

#[derive(Clone)]
pub struct App {
    inner: Arc<Inner>,
}

impl App {
    /// Takes ownership of the engine; `token`, if set, is required as a
    /// bearer token on every request.
    pub fn new(mut engine: Engine, token: Option<String>) -> Self {
        let outbox = Arc::new(Mutex::new(Vec::new()));
        let sink = outbox.clone();
        engine.set_listener(Box::new(move |notice: &EngineNotice| {
            if let Ok(mut queue) = sink.lock() {
                queue.push(notice.clone());
            }
        }));
        let (events, _) = broadcast::channel(STREAM_BUFFER);
        let snapshot = RwLock::new(Arc::new(Snapshot::of(&engine)));
        App {
            inner: Arc::new(Inner {
                engine: Mutex::new(engine),
                snapshot,
                outbox,
                events,
                token: token.filter(|t| !t.is_empty()),
            }),
        }
    }

    pub fn token(&self) -> Option<&str> {
        self.inner.token.as_deref()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.inner
            .snapshot
            .read()
            .map(|s| s.clone())
            .unwrap_or_else(|poisoned| poisoned.into_inner().clone())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<EngineNotice> {
        self.inner.events.subscribe()
    }

    /// Runs `f` under the engine lock, then publishes the new snapshot and
    /// only after that the notices the call produced, so a client reacting
    /// to a notice never reads older state.
    pub fn apply<T>(&self, f: impl FnOnce(&mut Engine) -> ctt_core::Result<T>) -> Result<T, ApiError> {
        let mut engine = self
            .inner
            .engine
            .lock()
            .map_err(|_| ApiError::internal("engine lock poisoned"))?;
        let result = f(&mut engine);
        let fresh = Arc::new(Snapshot::of(&engine));
        drop(engine);
        match self.inner.snapshot.write() {
            Ok(mut s) => *s = fresh,
            Err(poisoned) => *poisoned.into_inner() = fresh,
        }
        let notices = std::mem::take(&mut *self.inner.outbox.lock().unwrap_or_else(|p| p.into_inner()));
        for notice in notices {
            // No subscribers is fine.
            let _ = self.inner.events.send(notice);
        }
        Ok(result?)
    }

    /// Runs `f` under the engine lock without publishing anything; for calls
    /// that change no visible state.
    fn locked<T>(&self, f: impl FnOnce(&mut Engine) -> T) -> Result<T, ApiError> {
        let mut engine = self
            .inner
            .engine
            .lock()
            .map_err(|_| ApiError::internal("engine lock poisoned"))?;
        Ok(f(&mut engine))
    }

    /// [`App::apply`] on a blocking thread.
    pub async fn mutate<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        F: FnOnce(&mut Engine) -> ctt_core::Result<T> + Send + 'static,
        T: Send + 'static,
    {
        let app = self.clone();
        tokio::task::spawn_blocking(move || app.apply(f))
            .await
            .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    }

    /// Syncs the logs and snapshot to disk.
    pub fn flush(&self) -> Result<(), ApiError> {
        self.apply(|engine| engine.flush())
    }

    /// Feeds `source` into the engine on a background thread, running a
    /// cycle once a debounce window has been quiet. Stops when `stop` is set
    /// or the source closes.
    pub fn spawn_watcher(&self, mut source: Box<dyn ChangeSource + Send>, stop: Arc<AtomicBool>) -> JoinHandle<()> {
        let app = self.clone();
        std::thread::spawn(move || {
            let (debounce, clock) = match app.inner.engine.lock() {
                Ok(engine) => (engine.config().debounce_ms, engine.clock().clone()),
                Err(_) => return,
            };
            let poll = Duration::from_millis(debounce.clamp(10, 1000));
            let mut last_seen: Option<Timestamp> = None;
            let cycle = |app: &App| {
                if let Err(e) = app.apply(|engine| engine.run_cycle()) {
                    tracing::error!("cycle failed: {}", e.message);
                }
            };
            while !stop.load(Ordering::Relaxed) {
                match source.next(poll) {
                    SourceEvent::Observed(observation) => {
                        let at = observation.at();
                        if last_seen.is_some_and(|t| at.millis() - t.millis() >= debounce as i64) {
                            last_seen = None;
                            cycle(&app);
                        }
                        let queued = app.locked(|engine| {
                            let change = match observation {
                                Observation::Change(c) => Some(c),
                                Observation::Touched { at, path } => engine.observe(&path, at),
                            };
                            let queued = change.is_some();
                            if let Some(c) = change {
                                engine.submit(c);
                            }
                            queued
                        });
                        if matches!(queued, Ok(true)) {
                            last_seen = Some(at);
                        }
                    }
                    SourceEvent::Idle => {
                        let quiet = last_seen.is_some_and(|t| clock.now().millis() - t.millis() >= debounce as i64);
                        let follow_ups = app.locked(|engine| engine.has_follow_ups()).unwrap_or(false);
                        if quiet || follow_ups {
                            last_seen = None;
                            cycle(&app);
                        }
                    }
                    SourceEvent::Closed => {
                        if last_seen.is_some() {
                            cycle(&app);
                        }
                        break;
                    }
                }
            }
        })
    }
}
