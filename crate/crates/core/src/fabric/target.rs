use crate::error::Result;
use crate::memext::BlockTarget;

use super::engine::{Fabric, IoRequest, NamespaceId, StreamId};

/// A fabric namespace used directly as spill-store backing.
pub struct FabricTarget {
    fabric: Fabric,
    namespace: NamespaceId,
    stream: StreamId,
    size: u64,
}

impl FabricTarget {
    pub fn new(mut fabric: Fabric, namespace: NamespaceId) -> Result<Self> {
        fabric.enable_data();
        let size = fabric.namespace(namespace)?.size;
        let stream = fabric.open_stream(namespace)?;
        Ok(FabricTarget {
            fabric,
            namespace,
            stream,
            size,
        })
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn into_fabric(mut self) -> Fabric {
        let _ = self.fabric.close_stream(self.stream);
        self.fabric
    }
}

impl BlockTarget for FabricTarget {
    fn capacity(&self) -> u64 {
        self.size
    }

    fn now(&self) -> f64 {
        self.fabric.now()
    }

    fn write_at(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        let now = self.fabric.now();
        let req = IoRequest::write(self.namespace, offset, data.len() as u64, now).on_stream(self.stream);
        let done = self.fabric.submit_and_wait(req)?;
        self.fabric.advance_to(done.finish_time);
        self.fabric.write_data(self.namespace, offset, data)
    }

    fn read_at(&mut self, offset: u64, len: u64) -> Result<Vec<u8>> {
        let now = self.fabric.now();
        let req = IoRequest::read(self.namespace, offset, len, now).on_stream(self.stream);
        let done = self.fabric.submit_and_wait(req)?;
        self.fabric.advance_to(done.finish_time);
        self.fabric.read_data(self.namespace, offset, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{Attachment, Parent, VirtualDevice};
    use crate::memext::{RunEntry, SpillStore};

    #[test]
    fn spill_store_over_fabric() {
        let mut fabric = Fabric::new(vec![VirtualDevice::new(0)]).unwrap();
        let ns = fabric
            .partition_namespaces(Parent::Device(0), &[1 << 30], Attachment::Fabric)
            .unwrap();
        let target = FabricTarget::new(fabric, ns[0]).unwrap();
        let mut store = SpillStore::new(Box::new(target), 1 << 20, true).unwrap();
        let mut entries: Vec<RunEntry> = (0..100_000u64)
            .map(|i| RunEntry {
                code: i,
                normal: 1,
                tumoral: 2,
            })
            .collect();
        let h = store.flush_entries(&mut entries).unwrap();
        assert_eq!(store.read_run(&h).unwrap(), entries);
        let trace = store.io_trace();
        assert!(trace.records.windows(2).all(|w| w[0].time_us <= w[1].time_us));
        assert!(store.target().now() > 0.0);
    }
}
