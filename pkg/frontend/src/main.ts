// Browser bootstrap: binds the controller to the DOM. All ranking and
// metric logic lives in the pure modules; this file only shuttles events.

import { ApiClient, Attribute, Method } from "./api.js";
import { Controller } from "./controller.js";
import { renderControls, renderResults, escapeHtml } from "./render.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function draw(controller: Controller): void {
  el("controls").innerHTML = renderControls(controller.state);
  el("results").innerHTML = renderResults(controller.state);
  bindControls(controller);
}

function bindControls(controller: Controller): void {
  document.querySelectorAll<HTMLInputElement>("input[data-attr]").forEach((input) => {
    input.onchange = () =>
      void controller.change({
        kind: "toggle-attribute",
        attribute: input.dataset.attr as Attribute,
        on: input.checked,
      });
  });
  document.querySelectorAll<HTMLSelectElement>("select.token-picker").forEach((select) => {
    select.onchange = () => {
      if (select.value) {
        void controller.change({
          kind: "set-token",
          attribute: select.dataset.attr as Attribute,
          value: select.value,
        });
      }
    };
  });
  const slider = document.getElementById("threshold") as HTMLInputElement | null;
  if (slider) {
    slider.oninput = () =>
      void controller.change({ kind: "set-threshold", t: Number(slider.value) });
  }
}

async function pickUser(controller: Controller, userId: string): Promise<void> {
  const history = await api.userHistory(userId);
  const recent = history.slice(-5);
  await controller.change({
    kind: "set-history",
    items: recent.map((h) => ({ item_id: h.item_id, title: h.title })),
  });
  el("history-view").innerHTML = recent
    .map((h) => `<li>${escapeHtml(h.title)}</li>`)
    .join("");
}

async function searchItems(controller: Controller, query: string): Promise<void> {
  const found = await api.searchItems(query);
  el("search-results").innerHTML = found
    .slice(0, 12)
    .map(
      (item) =>
        `<li><button data-item="${escapeHtml(item.item_id)}">${escapeHtml(item.title)}</button></li>`,
    )
    .join("");
  document
    .querySelectorAll<HTMLButtonElement>("#search-results button")
    .forEach((button) => {
      button.onclick = () => {
        const picked = found.find((i) => i.item_id === button.dataset.item);
        if (!picked) return;
        const items = [
          ...controller.state.history,
          { item_id: picked.item_id, title: picked.title },
        ].slice(-5);
        void controller.change({ kind: "set-history", items }).then(() => {
          el("history-view").innerHTML = items
            .map((h) => `<li>${escapeHtml(h.title)}</li>`)
            .join("");
        });
      };
    });
}

async function boot(): Promise<void> {
  const controller = new Controller(api, () => draw(controller));
  await controller.start();

  el<HTMLButtonElement>("load-user").onclick = () =>
    void pickUser(controller, el<HTMLInputElement>("user-id").value.trim());
  el<HTMLInputElement>("item-search").oninput = () =>
    void searchItems(controller, el<HTMLInputElement>("item-search").value);
  el<HTMLInputElement>("compare-toggle").onchange = () =>
    void controller.change({
      kind: "set-compare",
      on: el<HTMLInputElement>("compare-toggle").checked,
    });
  document.querySelectorAll<HTMLInputElement>("input[name=method]").forEach((radio) => {
    radio.onchange = () => {
      if (radio.checked) {
        void controller.change({ kind: "set-method", method: radio.value as Method });
      }
    };
  });
}

void boot();
