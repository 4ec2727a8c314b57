// Shell: header with token entry, two tabs, view container.

import { HubApi } from "./api.js";
import { renderBenchmark } from "./benchmark.js";
import { renderBrowser } from "./browser.js";
import { el } from "./dom.js";

type View = "conversations" | "benchmarks";

export function mount(root: HTMLElement): void {
  const api = new HubApi();
  let view: View = "conversations";

  const content = el("main", { id: "view" });
  const render = (): void => {
    if (view === "conversations") void renderBrowser(content, api);
    else void renderBenchmark(content, api);
  };

  const tabs = new Map<View, HTMLButtonElement>();
  const tabBar = el("nav", { class: "tabs" });
  for (const name of ["conversations", "benchmarks"] as View[]) {
    const button = el("button", { class: "tab", "data-view": name }, [name]);
    button.addEventListener("click", () => {
      view = name;
      for (const [other, node] of tabs) {
        node.className = other === view ? "tab active" : "tab";
      }
      render();
    });
    tabs.set(name, button);
    tabBar.append(button);
  }
  tabs.get(view)?.classList.add("active");

  const token = el("input", {
    class: "token",
    type: "password",
    placeholder: "bearer token",
    value: api.token,
  });
  const apply = el("button", { class: "apply-token" }, ["set token"]);
  apply.addEventListener("click", () => {
    api.token = token.value;
    render();
  });

  root.append(
    el("header", {}, [
      el("h1", {}, ["turnbench"]),
      tabBar,
      el("span", { class: "spacer" }),
      token,
      apply,
    ]),
    content,
  );
  render();
}

const appRoot = document.getElementById("app");
if (appRoot) mount(appRoot);
