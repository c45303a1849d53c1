//! Applications built on the engine: a replicated dictionary and a shared
//! calendar.

pub mod calendar;
pub mod srda;

pub use calendar::{CalendarApp, CalendarOp, CalendarView, EventHandle};
pub use srda::{Attrs, DictState, SrdaApp, SrdaError, SrdaOp, SrdaSession};

/// Attribute map from `name=value` pairs.
pub fn attrs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Attrs {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect()
}

#[cfg(test)]
mod tests;
