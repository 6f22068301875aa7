//! Transaction-log model: parsing, validation and the canonical event store.

mod calendar;
mod ingest;
mod loans;
mod store;
mod types;

pub use calendar::{CalendarConfig, DiscountBand, PointOfInterest, TimeOfDay};
pub use ingest::{
    ingest_event_shards, ingest_events, parse_timestamp, read_event_records, read_events, write_events_csv,
    IngestOptions, IngestReport, RowError, EVENT_COLUMNS,
};
pub use loans::{ingest_loans, read_loans, LoanRecord, LoanTable};
pub use store::{clip_to_loan, BuildStats, EventStore, ObservationWindow, SubscriberHistory};
pub(crate) use store::{midnight, SECONDS_PER_DAY};
pub use types::{AccountType, ContactId, Country, Event, EventCharacteristics, EventRecord, EventType, Tower};
