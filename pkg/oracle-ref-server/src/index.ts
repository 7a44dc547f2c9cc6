export {
  Detection,
  ErrorFrame,
  OracleRequest,
  OracleResponse,
  ParsedRequest,
  detectionSchema,
  encodeFrame,
  errorFrameSchema,
  parseRequestLine,
  requestSchema,
  responseSchema,
  salvageId,
} from './protocol';
export { RgbImage, decodePngBase64, encodePngBase64 } from './png';
export { TfjsDetector, fileIoHandler, saveModelToDir } from './detector';
export {
  DEFAULT_FIXTURE,
  DEFAULT_THRESHOLD,
  OracleSession,
  Responder,
  RunningServer,
  ServerConfig,
  ServerMode,
  buildResponder,
  serveStdio,
  serveStream,
  serveTcp,
  validateConfig,
} from './server';
