import { ApiClient } from "./api";
import { App } from "./app";

declare global {
  interface Window {
    KGRAG_BASE_URL?: string;
  }
}

const baseUrl = window.KGRAG_BASE_URL ?? "http://127.0.0.1:8080";
const root = document.querySelector<HTMLDivElement>("#app");
if (!root) {
  throw new Error("missing #app mount point");
}
new App(root, new ApiClient(baseUrl));
