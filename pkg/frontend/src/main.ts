import { ServiceClient } from "./api.js";
import { EpisodeConsole } from "./console.js";
import { ConsoleSession } from "./session.js";
import { renderCard, renderStatus, renderTimeline, showToast } from "./ui.js";

function required(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

const params = new URLSearchParams(location.search);
const episodeId = params.get("episode");
const base = params.get("base") ?? "";

const statusEl = required("status");
const timelineEl = required("timeline");
const cardEl = required("card");
const toastsEl = required("toasts");

if (!episodeId) {
  statusEl.textContent =
    "open this page as /?episode=<id> (create one with POST /episodes)";
} else {
  const client = new ServiceClient(base);
  const session = new ConsoleSession(episodeId);
  const app = new EpisodeConsole(client, session, {
    render: (s) => {
      renderStatus(statusEl, s);
      renderTimeline(timelineEl, s);
      renderCard(cardEl, app);
    },
    toast: (message) => showToast(toastsEl, message),
  });
  app.start().catch((error) => {
    statusEl.textContent = `failed to load episode: ${error}`;
  });
}
