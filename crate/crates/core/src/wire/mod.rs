//! Everything that crosses the network: the forest codec, envelope framing
//! and protocol messages.

pub mod codec;
pub mod frame;
pub mod message;

pub use codec::{decode_forest, encode_forest, CodecError, FORMAT_VERSION, MAGIC};
pub use frame::{frame_read, frame_write, Envelope, FrameError, MAX_PAYLOAD};
pub use message::{
    ErrorCode, Field, FieldType, Message, MessageError, MessageKind, TrainRequest, TrainResponse,
    PROTOCOL_VERSION,
};
