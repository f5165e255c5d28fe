use std::any::Any;
use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

/// A batch of records at one time, travelling along one edge.
#[derive(Debug, Clone)]
pub struct Message<T, D> {
    /// The sender's time; the edge summary is applied on delivery.
    pub time: T,
    pub data: Vec<D>,
}

struct Slot<M> {
    senders: Vec<Sender<M>>,
    receivers: Vec<Option<Receiver<M>>>,
}

/// The queues connecting the workers of one cluster.
///
/// Workers construct identical dataflows and ask for channels by identifier
/// in the same order; whoever asks first allocates one queue per worker and
/// each worker then collects its own receiving end.
pub struct Fabric {
    peers: usize,
    slots: Mutex<HashMap<usize, Box<dyn Any + Send>>>,
}

impl Fabric {
    pub fn new(peers: usize) -> Arc<Self> {
        assert!(peers > 0, "a cluster needs at least one worker");
        Arc::new(Fabric { peers, slots: Mutex::new(HashMap::new()) })
    }

    pub fn peers(&self) -> usize {
        self.peers
    }

    /// Senders to every worker and the receiver owned by `worker`.
    ///
    /// # Panics
    ///
    /// If the identifier was already allocated with another message type,
    /// which means the workers built different dataflows, or if `worker`
    /// already took its receiver.
    pub(crate) fn channel<M: Send + 'static>(&self, id: usize, worker: usize) -> (Vec<Sender<M>>, Receiver<M>) {
        let mut slots = self.slots.lock().unwrap();
        let slot = slots.entry(id).or_insert_with(|| {
            let (senders, receivers) = (0..self.peers).map(|_| channel()).map(|(s, r)| (s, Some(r))).unzip();
            Box::new(Slot::<M> { senders, receivers })
        });
        let slot = slot
            .downcast_mut::<Slot<M>>()
            .unwrap_or_else(|| panic!("channel {id} requested with two different message types"));
        let receiver = slot.receivers[worker].take().unwrap_or_else(|| panic!("worker {worker} took channel {id} twice"));
        let senders = slot.senders.clone();
        if slot.receivers.iter().all(Option::is_none) {
            slots.remove(&id);
        }
        (senders, receiver)
    }
}
