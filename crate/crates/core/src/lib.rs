//! Core algorithms for a camera ring that controls smart-home devices.
//!
//! The ring streams binned grayscale frames, IMU samples and button state to a
//! phone over BLE. The phone reassembles frames, recognises gestures, picks the
//! centered object, resolves which registered device instance it is, and
//! dispatches a command.
//!
//! Modules:
//!
//! 1. [`protocol`] – 247-byte packet codec, capture files and frame reassembly.
//! 2. [`ringsim`] – ring device model: power state machine, binning camera,
//!    packet pacing and energy accounting.
//! 3. [`gesture`] – click / double-click / hold-rotate recognition from the
//!    button and accelerometer stream.
//! 4. [`perception`] – detector interface and centered-object selection.
//! 5. [`instances`] – patch-grid embeddings, scene similarity and the
//!    reference database.
//! 6. [`orchestrator`] – device registry, transport and the phone-side
//!    interaction pipeline with undo.
//! 7. [`budget`] – closed-form throughput, latency and battery calculators.
//! 8. [`simulate`] – trace-driven end-to-end run wiring all of the above.
//! 9. [`demo`] – a scripted household for the CLI demo and tests.

pub mod budget;
pub mod demo;
pub mod gesture;
pub mod image;
pub mod instances;
pub mod orchestrator;
pub mod perception;
pub mod protocol;
pub mod ringsim;
pub mod simulate;

pub use gesture::{GestureConfig, GestureEvent, GestureKind, GestureRecognizer};
pub use image::GrayImage;
pub use instances::{EmbeddingDb, PatchEmbedding, ReferenceEntry};
pub use orchestrator::{Command, CommandAction, DeviceRecord, Registry};
pub use perception::{BoundingBox, DeviceClass};
pub use protocol::{Frame, ImuSample, RingPacket, StatusFlags};
pub use ringsim::{LinkConfig, PowerProfile, PowerState};
