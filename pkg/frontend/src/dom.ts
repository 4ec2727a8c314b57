// Small element builders; no framework, no templates.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) node.append(child);
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

// A value rendered verbatim from a hub response; data-raw marks it for
// the snapshot tests that compare rendered bytes against response bytes.
export function rawSpan(path: string, token: string): HTMLSpanElement {
  return el("span", { "data-raw": path, class: "raw" }, [token]);
}
