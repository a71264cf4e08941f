//! Tag to handler dispatch with switchable handler groups.

use std::collections::{BTreeSet, HashMap};
use std::error::Error;
use std::fmt;

use thiserror::Error;

use super::{EventKind, Location, TagEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trigger {
    Open,
    Close,
    /// Character data following an open tag, until that tag is closed.
    CharData,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trigger::Open => "open",
            Trigger::Close => "close",
            Trigger::CharData => "chardata",
        })
    }
}

type Handler<S, E> =
    Box<dyn Fn(&mut S, &TagEvent, &mut GroupSwitch) -> Result<(), E> + Send + Sync>;

struct Group<S, E> {
    name: String,
    handlers: HashMap<(String, Trigger), Handler<S, E>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandlerError {
    #[error("group '{group}' already has a {trigger} handler for <{tag}>")]
    Duplicate {
        group: String,
        tag: String,
        trigger: Trigger,
    },
    #[error("no handler group named '{0}'")]
    UnknownGroup(String),
    #[error("groups '{first}' and '{second}' both handle {trigger} of <{tag}>")]
    Conflict {
        tag: String,
        trigger: Trigger,
        first: String,
        second: String,
    },
}

/// Named groups of handlers. Only handlers in active groups see events; a
/// tag nobody handles is skipped.
pub struct HandlerMap<S, E> {
    groups: Vec<Group<S, E>>,
    active: BTreeSet<usize>,
}

impl<S, E> Default for HandlerMap<S, E> {
    fn default() -> Self {
        Self {
            groups: Vec::new(),
            active: BTreeSet::new(),
        }
    }
}

impl<S, E> HandlerMap<S, E> {
    pub fn new() -> Self {
        Self::default()
    }

    fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Registers a handler. Groups are created on first use and start
    /// inactive.
    pub fn on<F>(
        &mut self,
        group: &str,
        tag: &str,
        trigger: Trigger,
        handler: F,
    ) -> Result<&mut Self, HandlerError>
    where
        F: Fn(&mut S, &TagEvent, &mut GroupSwitch) -> Result<(), E> + Send + Sync + 'static,
    {
        let idx = match self.group_index(group) {
            Some(i) => i,
            None => {
                self.groups.push(Group {
                    name: group.to_owned(),
                    handlers: HashMap::new(),
                });
                self.groups.len() - 1
            }
        };
        let key = (tag.to_ascii_lowercase(), trigger);
        if self.groups[idx].handlers.contains_key(&key) {
            return Err(HandlerError::Duplicate {
                group: group.to_owned(),
                tag: tag.to_owned(),
                trigger,
            });
        }
        self.groups[idx].handlers.insert(key, Box::new(handler));
        if self.active.contains(&idx) {
            self.check_conflicts(&self.active)?;
        }
        Ok(self)
    }

    pub fn activate(&mut self, group: &str) -> Result<(), HandlerError> {
        let idx = self
            .group_index(group)
            .ok_or_else(|| HandlerError::UnknownGroup(group.to_owned()))?;
        let mut next = self.active.clone();
        next.insert(idx);
        self.check_conflicts(&next)?;
        self.active = next;
        Ok(())
    }

    pub fn deactivate(&mut self, group: &str) {
        if let Some(idx) = self.group_index(group) {
            self.active.remove(&idx);
        }
    }

    pub fn is_active(&self, group: &str) -> bool {
        self.group_index(group)
            .is_some_and(|i| self.active.contains(&i))
    }

    fn check_conflicts(&self, active: &BTreeSet<usize>) -> Result<(), HandlerError> {
        let mut seen: HashMap<&(String, Trigger), usize> = HashMap::new();
        for &gi in active {
            for key in self.groups[gi].handlers.keys() {
                if let Some(&other) = seen.get(key) {
                    return Err(HandlerError::Conflict {
                        tag: key.0.clone(),
                        trigger: key.1,
                        first: self.groups[other].name.clone(),
                        second: self.groups[gi].name.clone(),
                    });
                }
                seen.insert(key, gi);
            }
        }
        Ok(())
    }

    fn lookup(
        &self,
        active: &BTreeSet<usize>,
        tag: &str,
        trigger: Trigger,
    ) -> Option<&Handler<S, E>> {
        let key = (tag.to_ascii_lowercase(), trigger);
        active
            .iter()
            .find_map(|&gi| self.groups[gi].handlers.get(&key))
    }
}

/// Group activation requests made by a handler. They take effect from the
/// next event on.
#[derive(Debug, Default)]
pub struct GroupSwitch {
    requests: Vec<(String, bool)>,
}

impl GroupSwitch {
    pub fn activate(&mut self, group: &str) {
        self.requests.push((group.to_owned(), true));
    }

    pub fn deactivate(&mut self, group: &str) {
        self.requests.push((group.to_owned(), false));
    }
}

#[derive(Debug)]
pub enum DispatchError<E> {
    Handler {
        location: Location,
        error: E,
    },
    Group {
        location: Location,
        error: HandlerError,
    },
}

impl<E> DispatchError<E> {
    pub fn location(&self) -> &Location {
        match self {
            DispatchError::Handler { location, .. } | DispatchError::Group { location, .. } => {
                location
            }
        }
    }
}

impl<E: fmt::Display> fmt::Display for DispatchError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DispatchError::Handler { location, error } => write!(f, "{location}: {error}"),
            DispatchError::Group { location, error } => write!(f, "{location}: {error}"),
        }
    }
}

impl<E: Error + 'static> Error for DispatchError<E> {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            DispatchError::Handler { error, .. } => Some(error),
            DispatchError::Group { error, .. } => Some(error),
        }
    }
}

/// Feeds `events` to `handlers` in order, threading `state` through them.
///
/// Character data is routed to the `CharData` handler of the most recent
/// open tag that has not been closed yet. A close tag pops back to its most
/// recent matching open; a close with no matching open is still dispatched
/// but leaves the scope unchanged.
pub fn parse_with_handlers<S, E>(
    events: &[TagEvent],
    handlers: &HandlerMap<S, E>,
    state: &mut S,
) -> Result<(), DispatchError<E>> {
    let mut active = handlers.active.clone();
    let mut scope: Vec<String> = Vec::new();

    for event in events {
        let target = match &event.kind {
            EventKind::Open { name, .. } => {
                scope.push(name.to_ascii_lowercase());
                Some((name.as_str(), Trigger::Open))
            }
            EventKind::Close { name } => {
                let lower = name.to_ascii_lowercase();
                if let Some(pos) = scope.iter().rposition(|n| *n == lower) {
                    scope.truncate(pos);
                }
                Some((name.as_str(), Trigger::Close))
            }
            EventKind::CharData { .. } => scope.last().map(|n| (n.as_str(), Trigger::CharData)),
        };
        let Some((tag, trigger)) = target else {
            continue;
        };
        let Some(handler) = handlers.lookup(&active, tag, trigger) else {
            continue;
        };

        let mut switch = GroupSwitch::default();
        handler(state, event, &mut switch).map_err(|error| DispatchError::Handler {
            location: event.location.clone(),
            error,
        })?;

        for (group, on) in switch.requests {
            let group_error = |error| DispatchError::Group {
                location: event.location.clone(),
                error,
            };
            let idx = handlers
                .group_index(&group)
                .ok_or_else(|| group_error(HandlerError::UnknownGroup(group.clone())))?;
            if on {
                let mut next = active.clone();
                next.insert(idx);
                handlers.check_conflicts(&next).map_err(group_error)?;
                active = next;
            } else {
                active.remove(&idx);
            }
        }
    }
    Ok(())
}
