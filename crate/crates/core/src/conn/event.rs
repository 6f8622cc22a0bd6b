use crate::protection::EncryptionLevel;
use crate::wire::{Frame, PacketHeader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerId {
    Retransmission,
    User(u32),
}

/// Requests from the scenario driving the connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    RaiseStreamLimit { stream_id: u64, max: u64 },
    RaiseDataLimit { max: u64 },
    Close { error_code: u64, reason: String },
}

/// A packet that has been built and protected but not yet written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutgoingPacket {
    pub level: EncryptionLevel,
    pub header: PacketHeader,
    pub frames: Vec<Frame>,
    /// Header and payload before protection, as logged.
    pub cleartext: Vec<u8>,
    pub datagram: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Started,
    DatagramReceived { datagram: Vec<u8>, timestamp_ms: u64 },
    PacketReceived {
        header: PacketHeader,
        frames: Vec<Frame>,
        level: EncryptionLevel,
        timestamp_ms: u64,
        cleartext: Vec<u8>,
    },
    /// Emitted by the bundler, written out by the socket agent.
    DatagramReady(OutgoingPacket),
    PacketSent {
        header: PacketHeader,
        frames: Vec<Frame>,
        level: EncryptionLevel,
        timestamp_ms: u64,
        cleartext: Vec<u8>,
        size: usize,
    },
    NewKeysAvailable { level: EncryptionLevel },
    FramesQueued { level: EncryptionLevel },
    StreamDataReadable { stream_id: u64 },
    LossDetected { level: EncryptionLevel, packet_numbers: Vec<u64> },
    ConnectionClosed { error_code: u64, reason: String, by_peer: bool },
    Timeout { timer: TimerId },
    Command(Command),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Started,
    DatagramReceived,
    PacketReceived,
    DatagramReady,
    PacketSent,
    NewKeysAvailable,
    FramesQueued,
    StreamDataReadable,
    LossDetected,
    ConnectionClosed,
    Timeout,
    Command,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::Started => EventKind::Started,
            Event::DatagramReceived { .. } => EventKind::DatagramReceived,
            Event::PacketReceived { .. } => EventKind::PacketReceived,
            Event::DatagramReady(_) => EventKind::DatagramReady,
            Event::PacketSent { .. } => EventKind::PacketSent,
            Event::NewKeysAvailable { .. } => EventKind::NewKeysAvailable,
            Event::FramesQueued { .. } => EventKind::FramesQueued,
            Event::StreamDataReadable { .. } => EventKind::StreamDataReadable,
            Event::LossDetected { .. } => EventKind::LossDetected,
            Event::ConnectionClosed { .. } => EventKind::ConnectionClosed,
            Event::Timeout { .. } => EventKind::Timeout,
            Event::Command(_) => EventKind::Command,
        }
    }
}

/// What an agent asks the bus to do after handling an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Emit(Event),
    /// Appends to the level's send queue; a queued ACK replaces any ACK
    /// already waiting at that level.
    QueueFrame { level: EncryptionLevel, frame: Frame },
    ArmTimer { timer: TimerId, delay_ms: u64 },
    CancelTimer { timer: TimerId },
    /// Marks the connection closed; no further packets are built.
    Close { error_code: u64, reason: String, by_peer: bool },
}
