//! Packet byte vector pipeline: PCAP ingestion, vectorisation, class balancing
//! with ROS / SMOTE / GAN / conditional GAN, and a packet classifier.

pub mod cgan;
pub mod classify;
pub mod dataset;
pub mod gan;
pub mod neural;
pub mod pcap_ingest;
pub mod preprocess;
pub mod resample;
pub mod rng;
