use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatRequest};

#[derive(Debug, Clone)]
pub struct Exchange {
    pub request: ChatRequest,
    pub reply: Result<String, BackendError>,
}

/// Wraps a backend and keeps every request and reply.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<Exchange>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.exchanges().into_iter().map(|e| e.request).collect()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let reply = self.inner.complete(req);
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Exchange {
                request: req.clone(),
                reply: reply.clone(),
            });
        reply
    }
}
