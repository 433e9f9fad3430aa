use core::sync::atomic::{AtomicUsize, Ordering};

use super::{ChatRequest, ChatResponse, LanguageModel, LmError, LmRole, RoleModels};

/// Wraps a backend and counts calls per role.
///
/// A call is attributed to the first role (in [`LmRole::ALL`] order) whose model
/// name equals the request's model, so roles sharing a model name share a count.
pub struct CountingModel<M> {
    inner: M,
    models: RoleModels,
    per_role: [AtomicUsize; 5],
    unattributed: AtomicUsize,
}

impl<M: LanguageModel> CountingModel<M> {
    pub fn new(inner: M, models: RoleModels) -> Self {
        Self { inner, models, per_role: Default::default(), unattributed: AtomicUsize::new(0) }
    }

    pub fn calls(&self, role: LmRole) -> usize {
        let idx = LmRole::ALL.iter().position(|r| *r == role).expect("role listed");
        self.per_role[idx].load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        self.per_role.iter().map(|c| c.load(Ordering::SeqCst)).sum::<usize>()
            + self.unattributed.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        for c in &self.per_role {
            c.store(0, Ordering::SeqCst);
        }
        self.unattributed.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: LanguageModel> LanguageModel for CountingModel<M> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        match LmRole::ALL.iter().position(|r| self.models.get(*r) == request.model) {
            Some(idx) => self.per_role[idx].fetch_add(1, Ordering::SeqCst),
            None => self.unattributed.fetch_add(1, Ordering::SeqCst),
        };
        self.inner.complete(request)
    }
}
