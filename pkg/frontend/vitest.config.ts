import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    globalSetup: ['tests/globalSetup.ts'],
    // the end-to-end suite shares one live server process
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
