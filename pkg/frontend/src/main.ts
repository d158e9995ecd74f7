/**
 * Browser entry point: wires the session flow to a small static DOM.
 *
 * The DOM is built once and patched in place on every state change, so the
 * textarea keeps focus and cursor position while the participant types.
 */

import { ApiClient } from "./api.js";
import { FlowState, IdStorage, MemoryStorage, SessionFlow } from "./flow.js";

const STORAGE_KEY = "session-id";

/** one session per tab: sessionStorage scopes the id to the tab */
function tabStorage(): IdStorage {
  try {
    const probe = "__probe__";
    window.sessionStorage.setItem(probe, probe);
    window.sessionStorage.removeItem(probe);
  } catch {
    return new MemoryStorage();
  }
  return {
    get: () => window.sessionStorage.getItem(STORAGE_KEY),
    set: (id: string) => window.sessionStorage.setItem(STORAGE_KEY, id),
    clear: () => window.sessionStorage.removeItem(STORAGE_KEY),
  };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function build(root: HTMLElement): {
  progress: HTMLElement;
  instruction: HTMLElement;
  answer: HTMLTextAreaElement;
  submit: HTMLButtonElement;
  retry: HTMLButtonElement;
  notice: HTMLElement;
  finished: HTMLElement;
  card: HTMLElement;
} {
  const card = el("main", "card");

  const progress = el("p", "progress");
  card.appendChild(progress);

  const instruction = el("div", "instruction");
  card.appendChild(instruction);

  const answer = el("textarea", "answer");
  answer.rows = 3;
  answer.setAttribute("aria-label", "your answer");
  card.appendChild(answer);

  const notice = el("p", "notice");
  notice.setAttribute("role", "status");
  card.appendChild(notice);

  const controls = el("div", "controls");
  const submit = el("button", "submit");
  submit.type = "button";
  submit.textContent = "Submit";
  controls.appendChild(submit);

  const retry = el("button", "retry");
  retry.type = "button";
  retry.textContent = "Retry";
  controls.appendChild(retry);
  card.appendChild(controls);

  const finished = el("p", "finished");
  finished.textContent = "All done — thank you! You can close this tab.";
  card.appendChild(finished);

  root.replaceChildren(card);
  return { progress, instruction, answer, submit, retry, notice, finished, card };
}

function render(
  dom: ReturnType<typeof build>,
  state: FlowState,
): void {
  const inTrial = state.phase === "trial";
  const blocked = state.phase === "submitting" || state.phase === "loading";

  dom.progress.textContent =
    state.nTrials > 0 && state.phase !== "finished"
      ? `Trial ${Math.min(state.position + 1, state.nTrials)} of ${state.nTrials}`
      : "";

  // textContent keeps the server's instruction text exactly as sent
  if (dom.instruction.textContent !== state.instructionText) {
    dom.instruction.textContent = state.instructionText;
  }
  dom.instruction.style.display = state.instructionText === "" ? "none" : "";

  if (dom.answer.value !== state.draft) {
    dom.answer.value = state.draft;
  }
  dom.answer.disabled = !inTrial && state.phase !== "network-error";
  dom.answer.style.display = state.phase === "finished" ? "none" : "";

  dom.submit.disabled = !inTrial;
  dom.submit.style.display =
    inTrial || blocked ? "" : "none";
  dom.submit.textContent = state.phase === "submitting" ? "Submitting…" : "Submit";

  dom.retry.style.display = state.phase === "network-error" ? "" : "none";

  dom.notice.textContent =
    state.phase === "loading" ? "Loading…" : state.notice;
  dom.notice.style.display = dom.notice.textContent === "" ? "none" : "";

  dom.finished.style.display = state.phase === "finished" ? "" : "none";
}

function main(): void {
  const root = document.getElementById("app");
  if (root === null) {
    return;
  }
  const client = new ApiClient(window.location.origin);
  const flow = new SessionFlow(client, tabStorage());
  const dom = build(root);

  flow.subscribe((state) => render(dom, state));

  dom.answer.addEventListener("input", () => {
    flow.setDraft(dom.answer.value);
  });
  dom.answer.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && (event.ctrlKey || event.metaKey)) {
      event.preventDefault();
      void flow.submit();
    }
  });
  dom.submit.addEventListener("click", () => {
    void flow.submit();
  });
  dom.retry.addEventListener("click", () => {
    void flow.retry();
  });

  render(dom, flow.current);
  void flow.start();
}

main();
