import { graphUrl } from "./api.js";

/** Swap in the latest server-rendered SVG; onFailure fires if it cannot load. */
export function renderGraph(
  container: HTMLElement,
  name: string,
  stamp: number,
  onFailure: () => void,
): HTMLImageElement {
  let image = container.querySelector<HTMLImageElement>("img.graph");
  if (!image || image.dataset.workflow !== name) {
    image = document.createElement("img");
    image.className = "graph";
    image.alt = `graph of ${name}`;
    image.dataset.workflow = name;
    container.replaceChildren(image);
  }
  image.onerror = () => onFailure();
  image.src = graphUrl(name, stamp);
  return image;
}
