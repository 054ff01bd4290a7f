use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use ssada_core::data::SampleId;
use ssada_core::labeler::{LabelRequest, Labeler};
use ssada_core::Error;

use crate::error::ServiceError;
use crate::store::RoundStore;

/// Publishes each request as a round on the store and blocks until humans
/// have labeled all of it. On timeout the round is withdrawn and the call
/// fails, leaving nothing committed.
#[derive(Debug, Clone)]
pub struct ServiceLabeler {
    store: Arc<RoundStore>,
    timeout: Duration,
}

impl ServiceLabeler {
    pub fn new(store: Arc<RoundStore>, timeout: Duration) -> Self {
        Self { store, timeout }
    }

    pub fn store(&self) -> &Arc<RoundStore> {
        &self.store
    }
}

fn to_core(e: ServiceError) -> Error {
    Error::Labeler(e.to_string())
}

impl Labeler for ServiceLabeler {
    fn resolve(&mut self, request: &LabelRequest) -> ssada_core::Result<BTreeMap<SampleId, u8>> {
        if request.items.is_empty() {
            return Ok(BTreeMap::new());
        }
        self.store.open_round(request).map_err(to_core)?;
        match self.store.wait_complete(self.timeout) {
            Ok(labels) => Ok(labels),
            Err(e) => {
                self.store.abort_round().map_err(to_core)?;
                Err(to_core(e))
            }
        }
    }
}
