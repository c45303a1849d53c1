use std::any::Any;

use crate::acg::{Action, Constraint, DocId};

/// Which actions have their keys compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum KeyScope {
    /// Only actions of the same document.
    #[default]
    Document,
    /// Any two actions of the same application, across documents.
    Application,
}

/// Application state for one document, rebuilt by executing schedules.
pub trait View: Any {
    fn apply(&mut self, action: &Action);

    /// Serialises the current state.
    fn materialise(&self) -> Vec<u8>;

    /// Replaces the current state by a materialised one.
    fn restore(&mut self, blob: &[u8]);

    fn as_any(&self) -> &dyn Any;
}

/// The engine's upcalls into an application.
pub trait Application {
    fn app_tag(&self) -> &str;

    fn key_scope(&self) -> KeyScope {
        KeyScope::Document
    }

    /// Constraints between two concurrent actions that share a key. Called
    /// at most once per unordered pair on each site; an empty answer means
    /// no conflict.
    fn get_constraint(&mut self, first: &Action, second: &Action) -> Vec<Constraint>;

    /// Empty state for a document.
    fn new_view(&self, doc: &DocId) -> Box<dyn View>;
}
