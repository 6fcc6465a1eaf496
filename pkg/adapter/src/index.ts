import { configFromEnv } from './config.js';
import { createApp } from './server.js';

const config = configFromEnv();
const app = createApp(config);
const port = process.env.ADAPTER_PORT ? Number(process.env.ADAPTER_PORT) : 8100;

app.listen(port, () => {
  console.log(
    `adapter listening on :${port} ` +
      `(model backend: ${config.modelBackend.kind}, chat upstream: ${config.chatBaseUrl})`,
  );
});
