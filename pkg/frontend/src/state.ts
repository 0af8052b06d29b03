/** UI state and its pure transitions.
 *
 * Invariants enforced here rather than in the DOM layer:
 * - messages mirror the server's session order; assistant sources are copied
 *   verbatim from the server payload and never synthesized client-side;
 * - one in-flight message at a time (send disabled while pending);
 * - follow-ups reuse the existing session id;
 * - feedback ratings are constrained to 1..5 (out-of-range is refused).
 */

import type { AssistantTurn, FeedbackCategory, Source } from "./api.js";

export interface ChatMessage {
  role: "user" | "assistant";
  text: string;
  sources: Source[];
}

export interface ExpandedSource {
  sectionId: string;
  headerPath: string[];
  body: string;
}

export interface FeedbackWidget {
  category: FeedbackCategory;
  rating: number | null;
  submitted: boolean;
}

export interface UiState {
  sessionId: string | null;
  messages: ChatMessage[];
  pending: boolean;
  pendingText: string | null;
  draft: string;
  banner: string | null;
  bannerRetriable: boolean;
  expanded: ExpandedSource | null;
  feedback: FeedbackWidget;
}

export function initialState(): UiState {
  return {
    sessionId: null,
    messages: [],
    pending: false,
    pendingText: null,
    draft: "",
    banner: null,
    bannerRetriable: false,
    expanded: null,
    feedback: { category: "helpfulness", rating: null, submitted: false },
  };
}

export function sessionStarted(state: UiState, sessionId: string): UiState {
  return { ...initialState(), sessionId };
}

export function draftChanged(state: UiState, draft: string): UiState {
  return { ...state, draft };
}

/** Begin sending; refused while another message is in flight. */
export function sendStarted(state: UiState, text: string): UiState {
  if (state.pending || !state.sessionId || !text.trim()) return state;
  return { ...state, pending: true, pendingText: text.trim(), banner: null, bannerRetriable: false };
}

/** Server answered: append the user/assistant pair in server order. */
export function answerReceived(state: UiState, turn: AssistantTurn): UiState {
  if (!state.pending || state.pendingText === null) return state;
  const user: ChatMessage = { role: "user", text: state.pendingText, sources: [] };
  const assistant: ChatMessage = {
    role: "assistant",
    text: turn.text,
    // Only server-provided sources become chips; anything else is discarded.
    sources: turn.sources.map((s) => ({ ...s, header_path: [...s.header_path] })),
  };
  return {
    ...state,
    pending: false,
    pendingText: null,
    draft: "",
    messages: [...state.messages, user, assistant],
  };
}

/** Network/provider failure: surface a banner, keep the typed input. */
export function sendFailed(state: UiState, message: string, retriable: boolean): UiState {
  if (!state.pending) return state;
  return {
    ...state,
    pending: false,
    draft: state.pendingText ?? state.draft,
    pendingText: null,
    banner: message,
    bannerRetriable: retriable,
  };
}

export function bannerDismissed(state: UiState): UiState {
  return { ...state, banner: null, bannerRetriable: false };
}

/** A source chip may only expand if the server listed it on some turn. */
export function knownSectionIds(state: UiState): Set<string> {
  const ids = new Set<string>();
  for (const message of state.messages) {
    for (const source of message.sources) ids.add(source.section_id);
  }
  return ids;
}

export function sourceExpanded(
  state: UiState,
  sectionId: string,
  headerPath: string[],
  body: string,
): UiState {
  if (!knownSectionIds(state).has(sectionId)) return state;
  return { ...state, expanded: { sectionId, headerPath, body } };
}

export function sourceCollapsed(state: UiState): UiState {
  return { ...state, expanded: null };
}

export function feedbackCategoryChanged(state: UiState, category: FeedbackCategory): UiState {
  return { ...state, feedback: { ...state.feedback, category, submitted: false } };
}

/** Out-of-range ratings are refused outright (widget clamp). */
export function feedbackRatingChanged(state: UiState, rating: number): UiState {
  if (!Number.isInteger(rating) || rating < 1 || rating > 5) return state;
  return { ...state, feedback: { ...state.feedback, rating, submitted: false } };
}

export function feedbackSubmitted(state: UiState): UiState {
  return { ...state, feedback: { ...state.feedback, submitted: true } };
}
