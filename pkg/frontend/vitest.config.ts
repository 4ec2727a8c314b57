import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // The live suite serves a real hub subprocess and replays a dataset.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
