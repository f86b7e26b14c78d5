import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node", // DOM suites opt in per file with @vitest-environment jsdom
    include: ["tests/**/*.test.ts"],
    testTimeout: 20000,
    hookTimeout: 30000,
  },
});
