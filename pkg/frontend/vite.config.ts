import { defineConfig } from "vitest/config";

export default defineConfig({
  server: {
    proxy: {
      // point the dev server at a running `prevkit serve` instance
      "/api": "http://127.0.0.1:8710",
      "/healthz": "http://127.0.0.1:8710",
    },
  },
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
  },
});
