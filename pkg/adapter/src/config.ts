/** Adapter runtime configuration, resolved once at startup. */

export interface HttpModelBackend {
  kind: 'http';
  /** Base URL of a model-runner service speaking the same wire protocol. */
  url: string;
}

export interface StubModelBackend {
  kind: 'stub';
}

export type ModelBackend = HttpModelBackend | StubModelBackend;

export interface AdapterConfig {
  /** Part-segmentation checkpoint requested from the model runner. */
  segmentationModelId: string;
  chatModelId: string;
  /** OpenAI-compatible base URL; /chat/completions is appended. */
  chatBaseUrl: string;
  device: string;
  /** Score-map threshold forwarded to the runner for mask binarization. */
  maskThreshold: number;
  modelBackend: ModelBackend;
}

export const DEFAULT_SEGMENTATION_MODEL_ID =
  'swinbase_cascade_lvis_paco_pascalpart_partimagenet_in';

export function configFromEnv(env: NodeJS.ProcessEnv = process.env): AdapterConfig {
  const backendUrl = env.ADAPTER_MODEL_BACKEND_URL;
  return {
    segmentationModelId: env.ADAPTER_SEG_MODEL_ID ?? DEFAULT_SEGMENTATION_MODEL_ID,
    chatModelId: env.ADAPTER_CHAT_MODEL ?? 'gpt-4',
    chatBaseUrl: env.ADAPTER_CHAT_BASE_URL ?? 'http://127.0.0.1:8200/v1',
    device: env.ADAPTER_DEVICE ?? 'cpu',
    maskThreshold: env.ADAPTER_MASK_THRESHOLD ? Number(env.ADAPTER_MASK_THRESHOLD) : 0.5,
    modelBackend: backendUrl ? { kind: 'http', url: backendUrl } : { kind: 'stub' },
  };
}

export function validateConfig(config: AdapterConfig): void {
  if (!config.segmentationModelId) {
    throw new Error('segmentationModelId must be set');
  }
  if (!(config.maskThreshold > 0 && config.maskThreshold < 1)) {
    throw new Error(`maskThreshold must be in (0, 1), got ${config.maskThreshold}`);
  }
  if (config.modelBackend.kind === 'http' && !config.modelBackend.url) {
    throw new Error('http model backend needs a URL');
  }
}
