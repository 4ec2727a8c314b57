// Byte-faithful JSON field access. The dashboard must not restate any
// number the hub sends (JSON.parse would turn 60.0 into "60"), so views
// render the raw value tokens exactly as they appear in the response
// body, keyed by dotted path ("stages.0.worker.mean_ms").

export type RawIndex = Map<string, string>;

const WS = " \t\n\r";

export function indexJson(text: string): RawIndex {
  const out: RawIndex = new Map();
  let i = 0;

  const skipWs = (): void => {
    while (i < text.length && WS.includes(text[i] as string)) i++;
  };

  const scanString = (): string => {
    const start = i;
    i++; // opening quote
    while (i < text.length) {
      const c = text[i];
      if (c === "\\") i += 2;
      else if (c === '"') {
        i++;
        return text.slice(start, i);
      } else i++;
    }
    throw new Error("unterminated string");
  };

  const scanBare = (): string => {
    const start = i;
    while (i < text.length && !(",}]" + WS).includes(text[i] as string)) i++;
    return text.slice(start, i);
  };

  const value = (path: string): void => {
    skipWs();
    const c = text[i];
    if (c === "{") {
      i++;
      objectBody(path);
    } else if (c === "[") {
      i++;
      arrayBody(path);
    } else if (c === '"') {
      out.set(path, scanString());
    } else {
      out.set(path, scanBare());
    }
  };

  const objectBody = (path: string): void => {
    skipWs();
    if (text[i] === "}") {
      i++;
      return;
    }
    for (;;) {
      skipWs();
      const key = JSON.parse(scanString()) as string;
      skipWs();
      if (text[i] !== ":") throw new Error(`expected ':' at ${i}`);
      i++;
      value(path === "" ? key : `${path}.${key}`);
      skipWs();
      if (text[i] === ",") {
        i++;
        continue;
      }
      if (text[i] !== "}") throw new Error(`expected '}' at ${i}`);
      i++;
      return;
    }
  };

  const arrayBody = (path: string): void => {
    skipWs();
    if (text[i] === "]") {
      i++;
      return;
    }
    for (let index = 0; ; index++) {
      value(path === "" ? String(index) : `${path}.${index}`);
      skipWs();
      if (text[i] === ",") {
        i++;
        continue;
      }
      if (text[i] !== "]") throw new Error(`expected ']' at ${i}`);
      i++;
      return;
    }
  };

  value("");
  return out;
}

// A parsed view plus the raw token index over one response body.
export class RawDoc {
  readonly text: string;
  readonly doc: unknown;
  readonly raw: RawIndex;

  constructor(text: string) {
    this.text = text;
    this.doc = JSON.parse(text);
    this.raw = indexJson(text);
  }

  // Raw token exactly as serialized, quotes and all.
  token(path: string): string {
    const raw = this.raw.get(path);
    if (raw === undefined) throw new Error(`no field at ${path}`);
    return raw;
  }

  // Display form: strings decode, everything else stays verbatim.
  show(path: string): string {
    const raw = this.token(path);
    return raw.startsWith('"') ? (JSON.parse(raw) as string) : raw;
  }

  has(path: string): boolean {
    return this.raw.has(path);
  }
}
