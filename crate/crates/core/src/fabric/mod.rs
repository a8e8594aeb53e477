//! Simulated disaggregated storage: devices, RAID0 composition, namespaces
//! and bandwidth arbitration.

mod config;
mod device;
mod engine;
mod stats;
mod target;

pub use config::{PoolConfig, POOL_KEYS};
pub use device::{
    compose, ComposedDevice, EfficiencyCurve, Extent, VirtualDevice, DEFAULT_BANDWIDTH,
    DEFAULT_CAPACITY, DEFAULT_FABRIC_LATENCY, DEFAULT_STRIPE,
};
pub use engine::{
    Attachment, Fabric, IoCompletion, IoRequest, Namespace, NamespaceId, Parent, RequestId,
    StreamId,
};
pub use stats::{timelines_to_csv, BandwidthTimeline, BucketSeries, STATS_CSV_HEADER};
pub use target::FabricTarget;
